"""NOAA GSOD ingestion, daily snapshots, forecast samples and splits.

The record store is a DataFrame with one row per station-day:
``station_id, date, lon, lat`` (radians) plus one float column per variable
(NaN when missing). Temperatures are Kelvin, pressure mb, winds knots.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import logging
import math
import tarfile
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .geo import GeoCoord, GeoError, deg_to_rad, make_geo
from .snapshot import VARIABLES, Sample, SnapshotError, StationSnapshot

log = logging.getLogger(__name__)

PARSER_VERSION = 1

SENTINELS = {"MAX": 9999.9, "MIN": 9999.9, "DEWP": 9999.9, "SLP": 9999.9, "WDSP": 999.9, "MXSPD": 999.9}
UNITS = {"MAX": "K", "MIN": "K", "DEWP": "K", "SLP": "mb", "WDSP": "kn", "MXSPD": "kn"}
BOUNDS = {
    "MAX": (160.0, 350.0),
    "MIN": (160.0, 350.0),
    "DEWP": (160.0, 350.0),
    "SLP": (850.0, 1100.0),
    "WDSP": (0.0, 200.0),
    "MXSPD": (0.0, 200.0),
}
REQUIRED_COLUMNS = ("STATION", "DATE", "LATITUDE", "LONGITUDE") + VARIABLES
COLUMNS = ["station_id", "date", "lon", "lat", *VARIABLES]


class GsodFormatError(ValueError):
    pass


class DataError(ValueError):
    pass


def fahrenheit_to_kelvin(f: float) -> float:
    return (f - 32.0) * 5.0 / 9.0 + 273.15


@dataclass(frozen=True)
class StationRecord:
    station_id: str
    date: dt.date
    coord: GeoCoord
    values: dict[str, float | None]


@dataclass
class ParseReport:
    filename: str = "<string>"
    rows: int = 0
    records: int = 0
    malformed_rows: int = 0
    bad_coordinates: int = 0
    out_of_bounds: Counter = field(default_factory=Counter)

    def merge(self, other: "ParseReport") -> None:
        self.rows += other.rows
        self.records += other.records
        self.malformed_rows += other.malformed_rows
        self.bad_coordinates += other.bad_coordinates
        self.out_of_bounds.update(other.out_of_bounds)


def parse_value(raw: str, variable: str) -> float | None:
    """Numeric value in output units, or None for sentinel/blank/out of bounds."""
    text = raw.strip().rstrip("*").strip()
    if not text:
        return None
    v = float(text)
    if math.isclose(v, SENTINELS[variable], abs_tol=1e-6) or not math.isfinite(v):
        return None
    if variable in ("MAX", "MIN", "DEWP"):
        v = fahrenheit_to_kelvin(v)
    lo, hi = BOUNDS[variable]
    if not lo <= v <= hi:
        raise OverflowError(variable)
    return v


def parse_gsod_file(content: str, filename: str = "<string>",
                    report: ParseReport | None = None) -> list[StationRecord]:
    """Parse one GSOD station-year CSV.

    Rows with unusable coordinates or unparsable fields are skipped and
    counted in ``report``; a header missing required columns raises.
    """
    report = report if report is not None else ParseReport(filename)
    reader = csv.reader(io.StringIO(content))
    try:
        header = [h.strip().upper() for h in next(reader)]
    except StopIteration:
        raise GsodFormatError(f"{filename}: empty file") from None
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise GsodFormatError(f"{filename}: header lacks columns {missing}")
    pos = {c: header.index(c) for c in REQUIRED_COLUMNS}
    out = []
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        report.rows += 1
        if len(row) < len(header):
            report.malformed_rows += 1
            continue
        try:
            station = row[pos["STATION"]].strip()
            date = dt.date.fromisoformat(row[pos["DATE"]].strip())
            if not station:
                raise ValueError("blank station id")
        except (IndexError, ValueError):
            report.malformed_rows += 1
            continue
        try:
            lat_s, lon_s = row[pos["LATITUDE"]].strip(), row[pos["LONGITUDE"]].strip()
            coord = make_geo(float(lon_s), float(lat_s))
            if not (math.isfinite(coord.lon) and math.isfinite(coord.lat)):
                raise ValueError
        except (IndexError, ValueError, GeoError):
            report.bad_coordinates += 1
            continue
        values: dict[str, float | None] = {}
        try:
            for var in VARIABLES:
                try:
                    values[var] = parse_value(row[pos[var]], var)
                except OverflowError:
                    values[var] = None
                    report.out_of_bounds[var] += 1
        except (IndexError, ValueError):
            report.malformed_rows += 1
            continue
        out.append(StationRecord(station, date, coord, values))
        report.records += 1
    return out


def records_to_frame(records: list[StationRecord]) -> pd.DataFrame:
    data = {
        "station_id": [r.station_id for r in records],
        "date": np.array([r.date for r in records], dtype="datetime64[D]"),
        "lon": np.array([r.coord.lon for r in records], dtype=float),
        "lat": np.array([r.coord.lat for r in records], dtype=float),
    }
    for var in VARIABLES:
        data[var] = np.array([np.nan if r.values[var] is None else r.values[var] for r in records],
                             dtype=float)
    frame = pd.DataFrame(data, columns=COLUMNS)
    frame["station_id"] = frame["station_id"].astype(str)
    return frame


def empty_frame() -> pd.DataFrame:
    return records_to_frame([])


def make_frame(station_ids, dates, lon_deg, lat_deg, **values) -> pd.DataFrame:
    """Record store from plain arrays (degrees; values already in output units)."""
    lon, lat = deg_to_rad(lon_deg, lat_deg)
    n = len(lon)
    data = {
        "station_id": np.asarray(station_ids).astype(str),
        "date": np.asarray(dates, dtype="datetime64[D]"),
        "lon": lon,
        "lat": lat,
    }
    for var in VARIABLES:
        data[var] = np.asarray(values.get(var, np.full(n, np.nan)), dtype=float)
    return pd.DataFrame(data, columns=COLUMNS)


# ingestion -------------------------------------------------------------------


def _iter_sources(root: Path):
    """(label, loader) for every CSV file or CSV member of a tar archive, sorted."""
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        name = path.name.lower()
        if name.endswith(".csv"):
            yield str(path.relative_to(root)), ("file", str(path), None)
        elif name.endswith((".tar", ".tar.gz", ".tgz")):
            with tarfile.open(path) as tar:
                for member in sorted(tar.getmembers(), key=lambda m: m.name):
                    if member.isfile() and member.name.lower().endswith(".csv"):
                        yield f"{path.relative_to(root)}:{member.name}", ("tar", str(path), member.name)


def _read_source(src) -> str:
    kind, path, member = src
    if kind == "file":
        return Path(path).read_text(encoding="utf-8", errors="replace")
    with tarfile.open(path) as tar:
        return tar.extractfile(member).read().decode("utf-8", errors="replace")


def _parse_source(args):
    label, src = args
    report = ParseReport(label)
    try:
        records = parse_gsod_file(_read_source(src), label, report)
    except GsodFormatError as exc:
        return label, empty_frame(), report, str(exc)
    return label, records_to_frame(records), report, None


@dataclass
class IngestReport:
    files: int = 0
    bad_files: list[str] = field(default_factory=list)
    parse: ParseReport = field(default_factory=lambda: ParseReport("<all>"))
    per_year: dict[int, dict[str, float]] = field(default_factory=dict)

    def format(self) -> str:
        p = self.parse
        lines = [
            f"files parsed        {self.files}",
            f"files rejected      {len(self.bad_files)}",
            f"rows read           {p.rows}",
            f"records kept        {p.records}",
            f"malformed rows      {p.malformed_rows}",
            f"bad coordinates     {p.bad_coordinates}",
        ]
        for var in VARIABLES:
            if p.out_of_bounds[var]:
                lines.append(f"out of bounds {var:<6}{p.out_of_bounds[var]}")
        if self.per_year:
            lines.append("year  stations  mean_daily_stations")
            for year, row in sorted(self.per_year.items()):
                lines.append(f"{year}  {int(row['stations']):>8}  {row['mean_daily']:>19.1f}")
        for name in self.bad_files:
            lines.append(f"rejected: {name}")
        return "\n".join(lines)


def year_summary(frame: pd.DataFrame) -> dict[int, dict[str, float]]:
    if frame.empty:
        return {}
    years = frame["date"].dt.year
    out = {}
    for year, grp in frame.groupby(years):
        daily = grp.groupby("date")["station_id"].nunique()
        out[int(year)] = {"stations": float(grp["station_id"].nunique()), "mean_daily": float(daily.mean())}
    return out


def sort_frame(frame: pd.DataFrame) -> pd.DataFrame:
    return frame.sort_values(["station_id", "date"], kind="mergesort").reset_index(drop=True)


def ingest_directory(root, workers: int = 1) -> tuple[pd.DataFrame, IngestReport]:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"not a directory: {root}")
    jobs = list(_iter_sources(root))
    report = IngestReport()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_parse_source, jobs, chunksize=16))
    else:
        results = [_parse_source(j) for j in jobs]
    frames = []
    for label, frame, rep, err in results:
        if err:
            report.bad_files.append(err)
            continue
        report.files += 1
        report.parse.merge(rep)
        frames.append(frame)
    frame = sort_frame(pd.concat(frames, ignore_index=True)) if frames else empty_frame()
    report.per_year = year_summary(frame)
    return frame, report


def archive_checksum(root) -> str:
    h = hashlib.sha256()
    h.update(f"parser={PARSER_VERSION}".encode())
    for path in sorted(Path(root).rglob("*")):
        if path.is_file() and path.name.lower().endswith((".csv", ".tar", ".tar.gz", ".tgz")):
            h.update(str(path.relative_to(root)).encode())
            with path.open("rb") as fh:
                for chunk in iter(lambda: fh.read(1 << 20), b""):
                    h.update(chunk)
    return h.hexdigest()


def save_cache(frame: pd.DataFrame, path, key: str) -> None:
    cols = {c: frame[c].to_numpy() for c in ("lon", "lat", *VARIABLES)}
    with Path(path).open("wb") as fh:
        np.savez_compressed(
            fh,
            key=np.array(key),
            parser_version=np.array(PARSER_VERSION),
            station_id=frame["station_id"].to_numpy().astype(str),
            date=frame["date"].to_numpy().astype("datetime64[D]").astype(np.int64),
            **cols,
        )


def load_cache(path, key: str | None = None) -> pd.DataFrame | None:
    """Cached record store, or None when missing or stale."""
    path = Path(path)
    if not path.exists():
        return None
    with np.load(path, allow_pickle=False) as z:
        if int(z["parser_version"]) != PARSER_VERSION:
            return None
        if key is not None and str(z["key"]) != key:
            return None
        data = {"station_id": z["station_id"].astype(str),
                "date": z["date"].astype("datetime64[D]")}
        for c in ("lon", "lat", *VARIABLES):
            data[c] = z[c]
    return pd.DataFrame(data, columns=COLUMNS)


def ingest(root, cache=None, workers: int = 1) -> tuple[pd.DataFrame, IngestReport | None]:
    """Parse a GSOD directory, reusing ``cache`` when its checksum matches."""
    key = archive_checksum(root) if cache else None
    if cache:
        frame = load_cache(cache, key)
        if frame is not None:
            log.info("using cache %s", cache)
            return frame, None
    frame, report = ingest_directory(root, workers)
    if cache:
        save_cache(frame, cache, key)
    return frame, report


# snapshots and samples ----------------------------------------------------------


def _check_variable(variable: str) -> None:
    if variable not in VARIABLES:
        raise DataError(f"unknown variable {variable!r}; expected one of {VARIABLES}")


def _to_day(d) -> np.datetime64:
    return np.datetime64(d, "D")


def _variable_rows(frame: pd.DataFrame, variable: str, start=None, end=None,
                   stations=None) -> pd.DataFrame:
    _check_variable(variable)
    mask = frame[variable].notna().to_numpy()
    lo, hi = BOUNDS[variable]
    vals = frame[variable].to_numpy()
    mask &= (vals >= lo) & (vals <= hi)
    if start is not None:
        mask &= frame["date"].to_numpy() >= _to_day(start)
    if end is not None:
        mask &= frame["date"].to_numpy() <= _to_day(end)
    if stations is not None:
        mask &= frame["station_id"].isin(list(stations)).to_numpy()
    return frame.loc[mask, ["station_id", "date", "lon", "lat", variable]]


def _dedupe(rows: pd.DataFrame) -> tuple[pd.DataFrame, int]:
    dup = rows.duplicated(["date", "station_id"], keep="first")
    n = int(dup.sum())
    if n:
        log.warning("%d duplicate station-day rows dropped (first kept)", n)
    rows = rows.loc[~dup.to_numpy()]
    return rows.sort_values(["date", "station_id"], kind="mergesort"), n


def _snapshot_from_rows(rows: pd.DataFrame, date, variable, stats) -> StationSnapshot:
    values = rows[variable].to_numpy(dtype=float)
    if stats is not None:
        values = (values - stats[0]) / stats[1]
    return StationSnapshot(pd.Timestamp(date).date(), variable, rows["station_id"].to_numpy().astype(str),
                           rows["lon"].to_numpy(dtype=float), rows["lat"].to_numpy(dtype=float), values)


def build_snapshot(frame: pd.DataFrame, date, variable: str, stats: tuple[float, float] | None = None,
                   stations=None) -> StationSnapshot:
    """Stations reporting a valid ``variable`` on ``date``, sorted by id."""
    rows = _variable_rows(frame, variable, date, date, stations)
    if rows.empty:
        raise SnapshotError(f"no stations report {variable} on {date}")
    rows, _ = _dedupe(rows)
    return _snapshot_from_rows(rows, date, variable, stats)


def daily_snapshots(frame: pd.DataFrame, variable: str, start=None, end=None,
                    stations=None) -> dict[dt.date, StationSnapshot]:
    rows, _ = _dedupe(_variable_rows(frame, variable, start, end, stations))
    out = {}
    for day, grp in rows.groupby("date", sort=True):
        out[pd.Timestamp(day).date()] = _snapshot_from_rows(grp, day, variable, None)
    return out


@dataclass
class SampleIndex:
    variable: str
    samples: list[Sample]
    input_steps: int = 1
    output_steps: int = 1

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


def build_dataset(frame: pd.DataFrame, variable: str, date_range, input_steps: int = 1,
                  output_steps: int = 1, stations=None, target_stations=None) -> SampleIndex:
    """Windows of consecutive calendar days where every day has reports.

    A window holds ``input_steps`` input days (t-n..t with n = input_steps - 1)
    followed by ``output_steps`` target days.

    ``stations`` restricts input days and ``target_stations`` restricts target
    days (defaulting to ``stations``).
    """
    start, end = (pd.Timestamp(d).date() for d in date_range)
    if (end - start).days < 1:
        raise DataError("date range must span at least 2 days")
    if target_stations is None:
        target_stations = stations
    inputs = daily_snapshots(frame, variable, start, end, stations)
    targets = inputs if target_stations is stations else daily_snapshots(frame, variable, start, end,
                                                                        target_stations)
    span = input_steps + output_steps
    one = dt.timedelta(days=1)
    samples = []
    day = start
    while day + (span - 1) * one <= end:
        in_days = [day + i * one for i in range(input_steps)]
        out_days = [day + (input_steps + j) * one for j in range(output_steps)]
        if all(d in inputs for d in in_days) and all(d in targets for d in out_days):
            samples.append(Sample(tuple(inputs[d] for d in in_days), tuple(targets[d] for d in out_days)))
        day += one
    if not samples:
        raise DataError(f"no {variable} samples between {start} and {end}")
    return SampleIndex(variable, samples, input_steps, output_steps)


def split_stations(ids, fraction: float, seed: int) -> tuple[set[str], set[str]]:
    """Seeded partition of station ids; the first part gets ceil(fraction * n)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    if isinstance(ids, pd.DataFrame):
        ids = ids["station_id"]
    pool = np.array(sorted(set(map(str, ids))))
    order = np.random.default_rng(seed).permutation(pool.size)
    n_a = math.ceil(fraction * pool.size)
    return set(pool[order[:n_a]].tolist()), set(pool[order[n_a:]].tolist())


def compute_norm_stats(frame: pd.DataFrame, variable: str, date_range=None,
                       stations=None) -> tuple[float, float]:
    """Population mean and std of all station-day values; std floored at 1e-6."""
    start, end = date_range if date_range is not None else (None, None)
    vals = _variable_rows(frame, variable, start, end, stations)[variable].to_numpy(dtype=float)
    if vals.size < 2:
        raise DataError(f"need at least 2 {variable} values for normalization, got {vals.size}")
    return float(vals.mean()), max(float(vals.std()), 1e-6)


def year_range(first: int, last: int) -> tuple[dt.date, dt.date]:
    return dt.date(first, 1, 1), dt.date(last, 12, 31)
