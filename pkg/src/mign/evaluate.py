"""Metrics, the persistence baseline, rollouts, regional analysis and error export."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geo import knn_edges
from .model import MignModel, forward, predict_sample
from .snapshot import Sample, StationSnapshot


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class RegionSpec:
    name: str
    lon_intervals: tuple[tuple[float, float], ...]
    lat_interval: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.lat_interval
        if not -90 <= lo <= hi <= 90:
            raise ValueError(f"{self.name}: bad latitude interval {self.lat_interval}")
        for a, b in self.lon_intervals:
            if not -180 <= a <= b <= 180:
                raise ValueError(f"{self.name}: bad longitude interval {(a, b)}")

    def contains(self, lon_deg, lat_deg) -> np.ndarray:
        lon_deg, lat_deg = np.asarray(lon_deg), np.asarray(lat_deg)
        inside = np.zeros(lon_deg.shape, dtype=bool)
        for a, b in self.lon_intervals:
            inside |= (lon_deg >= a) & (lon_deg <= b)
        return inside & (lat_deg >= self.lat_interval[0]) & (lat_deg <= self.lat_interval[1])


DEFAULT_REGIONS = (
    RegionSpec("Africa", ((-20.0, 55.0),), (-35.0, 38.0)),
    RegionSpec("Asia", ((55.0, 180.0),), (5.0, 80.0)),
    RegionSpec("Australia", ((110.0, 155.0),), (-45.0, -10.0)),
    RegionSpec("South America", ((-82.0, -34.0),), (-56.0, 13.0)),
)


def load_regions(path) -> list[RegionSpec]:
    """Regions from a TOML file of ``[[region]]`` tables (name, lon, lat).

    ``lon`` is either one ``[lo, hi]`` pair or a list of pairs.
    """
    from .config import load_toml

    out = []
    for item in load_toml(path).get("region", []):
        lon = item["lon"]
        pairs = (tuple(lon),) if not isinstance(lon[0], (list, tuple)) else tuple(tuple(p) for p in lon)
        out.append(RegionSpec(item["name"], pairs, tuple(item["lat"])))
    return out


@dataclass
class MetricsReport:
    """Every prediction with its truth, plus derived aggregates (physical units)."""

    variable: str
    sample: np.ndarray
    step: np.ndarray
    date: np.ndarray
    station_id: np.ndarray
    lon_deg: np.ndarray
    lat_deg: np.ndarray
    pred: np.ndarray
    truth: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.pred.size

    @property
    def errors(self) -> np.ndarray:
        return self.pred - self.truth

    @property
    def mse(self) -> float:
        return float(np.mean(self.errors**2)) if self.n else float("nan")

    @property
    def mae(self) -> float:
        return float(np.mean(np.abs(self.errors))) if self.n else float("nan")

    def per_sample(self) -> list[tuple[int, float, float]]:
        out = []
        for s in np.unique(self.sample):
            e = self.errors[self.sample == s]
            out.append((int(s), float(np.mean(e**2)), float(np.mean(np.abs(e)))))
        return out

    def per_step(self) -> list[tuple[int, float, float]]:
        out = []
        for s in np.unique(self.step):
            e = self.errors[self.step == s]
            out.append((int(s), float(np.mean(e**2)), float(np.mean(np.abs(e)))))
        return out

    def per_station(self) -> list[dict]:
        """Mean absolute error per station, ordered by station id.

        Coordinates are those of the station's first prediction.
        """
        out = []
        abs_err = np.abs(self.errors)
        order = np.argsort(self.station_id, kind="stable")
        ids = self.station_id[order]
        if ids.size == 0:
            return out
        starts = np.flatnonzero(np.r_[True, ids[1:] != ids[:-1]])
        ends = np.r_[starts[1:], ids.size]
        for a, b in zip(starts, ends):
            rows = order[a:b]
            first = rows[0]
            out.append({"station_id": str(ids[a]), "lon_deg": float(self.lon_deg[first]),
                        "lat_deg": float(self.lat_deg[first]), "mae": float(abs_err[rows].mean()),
                        "n_predictions": int(b - a)})
        return out

    def summary(self) -> dict:
        return {"variable": self.variable, "n_predictions": self.n, "mse": self.mse, "mae": self.mae,
                "per_step": [{"step": s, "mse": m, "mae": a} for s, m, a in self.per_step()],
                **self.meta}

    def to_json(self, path) -> None:
        payload = {
            "variable": self.variable,
            "meta": self.meta,
            "summary": self.summary(),
            "predictions": {
                "sample": self.sample.tolist(),
                "step": self.step.tolist(),
                "date": [str(d) for d in self.date],
                "station_id": self.station_id.tolist(),
                "lon_deg": self.lon_deg.tolist(),
                "lat_deg": self.lat_deg.tolist(),
                "pred": self.pred.tolist(),
                "truth": self.truth.tolist(),
            },
        }
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def from_json(cls, path) -> "MetricsReport":
        payload = json.loads(Path(path).read_text())
        p = payload["predictions"]
        return cls(payload["variable"], np.array(p["sample"], dtype=np.int64),
                   np.array(p["step"], dtype=np.int64), np.array(p["date"], dtype="datetime64[D]"),
                   np.array(p["station_id"], dtype=str), np.array(p["lon_deg"], dtype=float),
                   np.array(p["lat_deg"], dtype=float), np.array(p["pred"], dtype=float),
                   np.array(p["truth"], dtype=float), payload.get("meta", {}))

    @classmethod
    def empty(cls, variable: str = "") -> "MetricsReport":
        z = np.zeros(0)
        return cls(variable, z.astype(np.int64), z.astype(np.int64), z.astype("datetime64[D]"),
                   z.astype(str), z, z, z, z)


class ReportBuilder:
    def __init__(self, variable: str):
        self.variable = variable
        self.parts: list[tuple] = []

    def add(self, sample_idx: int, step: int, target: StationSnapshot, pred: np.ndarray) -> None:
        pred = np.asarray(pred, dtype=float)
        if pred.shape != target.values.shape:
            raise EvaluationError(f"{pred.size} predictions for {len(target)} targets")
        if not np.all(np.isfinite(pred)):
            raise FloatingPointError(f"non-finite predictions in sample {sample_idx} step {step}")
        n = len(target)
        self.parts.append((np.full(n, sample_idx), np.full(n, step),
                           np.full(n, np.datetime64(target.date, "D")), target.station_ids,
                           np.degrees(target.lon), np.degrees(target.lat), pred, target.values))

    def build(self, meta: dict | None = None) -> MetricsReport:
        if not self.parts:
            return MetricsReport.empty(self.variable)
        cols = [np.concatenate(c) for c in zip(*self.parts)]
        return MetricsReport(self.variable, cols[0].astype(np.int64), cols[1].astype(np.int64),
                             cols[2].astype("datetime64[D]"), cols[3].astype(str), *cols[4:],
                             meta=meta or {})


# predictors ---------------------------------------------------------------


class Persistence:
    """Tomorrow equals today; stations absent today copy their nearest reporting neighbor."""

    def __init__(self):
        self.fallbacks = 0
        self.predictions = 0

    def predict(self, snapshot_t: StationSnapshot, target: StationSnapshot) -> np.ndarray:
        if len(snapshot_t) == 0:
            raise EvaluationError(f"empty input snapshot for {snapshot_t.date}")
        if snapshot_t.variable != target.variable:
            raise EvaluationError(f"variable mismatch: {snapshot_t.variable} vs {target.variable}")
        pos = {sid: i for i, sid in enumerate(snapshot_t.station_ids.tolist())}
        idx = np.array([pos.get(sid, -1) for sid in target.station_ids.tolist()], dtype=np.int64)
        missing = idx < 0
        if np.any(missing):
            nn = knn_edges((snapshot_t.lon, snapshot_t.lat),
                           (target.lon[missing], target.lat[missing]), 1)
            idx[missing] = nn.neighbors[:, 0]
        self.fallbacks += int(missing.sum())
        self.predictions += idx.size
        return snapshot_t.values[idx].copy()

    def __call__(self, sample: Sample) -> list[np.ndarray]:
        return [self.predict(sample.inputs[-1], t) for t in sample.targets]

    def meta(self) -> dict:
        frac = self.fallbacks / self.predictions if self.predictions else 0.0
        return {"model": "persistence", "fallbacks": self.fallbacks, "fallback_fraction": frac}


def persistence_forecast(snapshot_t: StationSnapshot, target: StationSnapshot) -> np.ndarray:
    return Persistence().predict(snapshot_t, target)


def evaluate(predictor, samples, variable: str | None = None) -> MetricsReport:
    """Run ``predictor`` (a MignModel, Persistence or callable) over samples."""
    samples = list(samples)
    if not samples:
        raise EvaluationError("empty dataset")
    variable = variable or samples[0].targets[0].variable
    if isinstance(predictor, MignModel):
        model = predictor
        fn = lambda s: predict_sample(model, s)  # noqa: E731
        meta = {"model": "mign"}
    else:
        fn = predictor
        meta = {}
    builder = ReportBuilder(variable)
    for i, sample in enumerate(samples):
        for step, (target, pred) in enumerate(zip(sample.targets, fn(sample)), start=1):
            builder.add(i, step, target, pred)
    if isinstance(predictor, Persistence):
        meta = predictor.meta()
    return builder.build(meta)


def autoregressive_rollout(model: MignModel, snapshot_t: StationSnapshot,
                           targets: list[StationSnapshot]) -> list[np.ndarray]:
    """Feed each step's predictions back as the next step's input snapshot."""
    if not targets:
        raise EvaluationError("rollout needs at least one step")
    current = snapshot_t
    out = []
    for step, tgt in enumerate(targets, start=1):
        if len(tgt) == 0:
            raise EvaluationError(f"empty target set at rollout step {step}")
        pred = forward(current, tgt.lon, tgt.lat, model)
        out.append(pred)
        current = tgt.with_values(pred)
    return out


def evaluate_rollout(model: MignModel, samples, variable: str | None = None) -> MetricsReport:
    """Rollout over multi-target samples; step s scores the s-day-ahead forecast."""
    rollout = lambda s: autoregressive_rollout(model, s.inputs[-1], list(s.targets))  # noqa: E731
    report = evaluate(rollout, samples, variable)
    report.meta.update({"model": "mign-rollout"})
    return report


def regional_breakdown(report: MetricsReport, regions=DEFAULT_REGIONS) -> list[dict]:
    """Per-region metrics; each prediction goes to the first containing region, else "other"."""
    assigned = np.full(report.n, -1)
    for r, region in enumerate(regions):
        free = assigned < 0
        assigned[free & region.contains(report.lon_deg, report.lat_deg)] = r
    names = [r.name for r in regions] + ["other"]
    out = []
    for r, name in enumerate(names):
        mask = assigned == (r if r < len(regions) else -1)
        e = report.errors[mask]
        out.append({"region": name, "n_predictions": int(mask.sum()),
                    "mse": float(np.mean(e**2)) if e.size else float("nan"),
                    "mae": float(np.mean(np.abs(e))) if e.size else float("nan")})
    return out


def export_station_errors(report: MetricsReport, path, fmt: str = "csv") -> None:
    rows = report.per_station()
    path = Path(path)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["station_id", "lon_deg", "lat_deg", "mae", "n_predictions"])
            for r in rows:
                w.writerow([r["station_id"], repr(r["lon_deg"]), repr(r["lat_deg"]), repr(r["mae"]),
                            r["n_predictions"]])
    elif fmt == "geojson":
        features = [{"type": "Feature",
                     "geometry": {"type": "Point", "coordinates": [r["lon_deg"], r["lat_deg"]]},
                     "properties": {k: r[k] for k in ("station_id", "mae", "n_predictions")}}
                    for r in rows]
        path.write_text(json.dumps({"type": "FeatureCollection", "features": features}))
    else:
        raise ValueError(f"unknown export format {fmt!r}")


def export_predictions(report: MetricsReport, path) -> None:
    """One CSV row per prediction with its error."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "step", "date", "station_id", "lon_deg", "lat_deg", "pred", "truth", "error"])
        for i in range(report.n):
            w.writerow([int(report.sample[i]), int(report.step[i]), str(report.date[i]),
                        report.station_id[i], repr(float(report.lon_deg[i])), repr(float(report.lat_deg[i])),
                        repr(float(report.pred[i])), repr(float(report.truth[i])),
                        repr(float(report.errors[i]))])


def format_table(rows: list[dict], columns: list[str]) -> str:
    def cell(v):
        return f"{v:.4f}" if isinstance(v, float) else str(v)

    widths = [max(len(c), *(len(cell(r[c])) for r in rows)) if rows else len(c) for c in columns]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    for r in rows:
        lines.append("  ".join(cell(r[c]).ljust(w) for c, w in zip(columns, widths)))
    return "\n".join(lines)
