"""Command-line interface: ``mign <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import logging
import sys

from . import checkpoint
from .config import ConfigError, load_train_config
from .data import (DataError, GsodFormatError, build_dataset, compute_norm_stats, ingest, load_cache,
                   save_cache, split_stations, year_range)
from .evaluate import (DEFAULT_REGIONS, EvaluationError, MetricsReport, Persistence, evaluate,
                       evaluate_rollout, export_predictions, export_station_errors, format_table,
                       load_regions, regional_breakdown)
from .healpix import MeshConfigError, build_mesh
from .model import ModelError
from .snapshot import VARIABLES, SnapshotError
from .synthetic import SyntheticWorld
from .training import NumericError, TrainConfig, train

log = logging.getLogger("mign")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _date(s: str) -> dt.date:
    return dt.date.fromisoformat(s)


def _add_data_args(p, variable=True):
    p.add_argument("--cache", required=True, help="record store written by `ingest` or `synth`")
    if variable:
        p.add_argument("--variable", choices=VARIABLES)


def _add_split_args(p):
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--range", nargs=2, type=_date, metavar=("START", "END"),
                   help="explicit date range overriding --split")
    p.add_argument("--generalization", action="store_true",
                   help="evaluate on the held-out half of the stations")
    p.add_argument("--seed", type=int, help="station split seed (default: from checkpoint)")
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--regions", help="TOML regions file; default continental boxes")
    p.add_argument("--report-out", help="write the full report as JSON")
    p.add_argument("--json", action="store_true", help="print the summary as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mign", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse a GSOD directory into a cache")
    p.add_argument("directory")
    p.add_argument("--cache", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--report", help="also write the ingest report here")

    p = sub.add_parser("synth", help="write a synthetic record store")
    p.add_argument("--cache", required=True)
    p.add_argument("--variable", choices=VARIABLES, default="MAX")
    p.add_argument("--stations", type=int, default=400)
    p.add_argument("--days", type=int, default=60)
    p.add_argument("--start", type=_date, default=dt.date(2020, 1, 1))
    p.add_argument("--report-prob", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a model for one variable")
    _add_data_args(p)
    p.add_argument("--config", help="TOML training config")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="CSV of per-epoch losses")
    p.add_argument("--train-range", nargs=2, type=_date, metavar=("START", "END"))
    p.add_argument("--val-range", nargs=2, type=_date, metavar=("START", "END"))
    p.add_argument("--generalization", action="store_true", help="train on a seeded half of stations")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--fraction", type=float, default=0.5)
    for f in dataclasses.fields(TrainConfig):
        if f.type in ("float", "int", "int | None") and f.name != "variable":
            p.add_argument("--" + f.name.replace("_", "-"), type=float if f.type == "float" else int)
    for f in dataclasses.fields(TrainConfig().model):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            p.add_argument(flag, type=lambda s: s.lower() in ("1", "true", "yes"), metavar="BOOL")
        elif f.type == "int":
            p.add_argument(flag, type=int)
        else:
            p.add_argument(flag)

    p = sub.add_parser("evaluate", help="score a checkpoint")
    p.add_argument("--ckpt", required=True)
    _add_data_args(p, variable=False)
    _add_split_args(p)

    p = sub.add_parser("rollout", help="autoregressive multi-day evaluation")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--steps", type=int, required=True)
    _add_data_args(p, variable=False)
    _add_split_args(p)

    p = sub.add_parser("baseline", help="score a reference forecast")
    p.add_argument("name", choices=("persistence",))
    _add_data_args(p)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--train-years", nargs=2, type=int, default=(2017, 2022))
    p.add_argument("--val-years", nargs=2, type=int, default=(2023, 2023))
    p.add_argument("--test-years", nargs=2, type=int, default=(2024, 2024))
    _add_split_args(p)

    p = sub.add_parser("export-errors", help="per-station MAE as CSV or GeoJSON")
    p.add_argument("--report", required=True, help="JSON report from evaluate/rollout/baseline")
    p.add_argument("--format", choices=("csv", "geojson"), default="csv")
    p.add_argument("--out", required=True)
    p.add_argument("--predictions", help="also write every prediction to this CSV")

    p = sub.add_parser("mesh", help="export HEALPix mesh nodes as CSV")
    p.add_argument("--level", type=int, default=3)
    p.add_argument("--out", required=True)
    return parser


def _load_frame(path):
    frame = load_cache(path)
    if frame is None:
        raise DataError(f"no usable record cache at {path}")
    return frame


def _train_config(args) -> TrainConfig:
    cfg = load_train_config(args.config) if args.config else TrainConfig()
    top = {}
    for f in dataclasses.fields(TrainConfig):
        v = getattr(args, f.name, None)
        if v is not None and f.name != "model":
            top[f.name] = v
    if args.variable:
        top["variable"] = args.variable
    model_kw = {f.name: getattr(args, f.name) for f in dataclasses.fields(cfg.model)
                if getattr(args, f.name, None) is not None}
    return dataclasses.replace(cfg, model=dataclasses.replace(cfg.model, **model_kw), **top)


def _range(explicit, years):
    return tuple(explicit) if explicit else year_range(*years)


def cmd_ingest(args) -> int:
    frame, report = ingest(args.directory, args.cache, args.workers)
    text = report.format() if report else f"cache up to date: {len(frame)} records"
    print(text)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text + "\n")
    return 0


def cmd_synth(args) -> int:
    world = SyntheticWorld(n_stations=args.stations, n_days=args.days, start=args.start,
                           variable=args.variable, report_prob=args.report_prob, seed=args.seed)
    frame = world.frame()
    save_cache(frame, args.cache, key=f"synthetic:{args.seed}")
    print(f"wrote {len(frame)} synthetic {args.variable} records ({world.start} .. {world.end})")
    return 0


def cmd_train(args) -> int:
    cfg = _train_config(args)
    frame = _load_frame(args.cache)
    train_range = _range(args.train_range, cfg.train_years)
    val_range = _range(args.val_range, cfg.val_years)
    stations = None
    if args.generalization:
        stations, _ = split_stations(frame, args.fraction, args.split_seed)
    steps = dict(input_steps=cfg.model.input_steps, output_steps=cfg.model.output_steps)
    train_set = build_dataset(frame, cfg.variable, train_range, stations=stations, **steps)
    try:
        val_set = build_dataset(frame, cfg.variable, val_range, stations=stations, **steps).samples
    except DataError:
        log.warning("no validation samples in %s .. %s", *val_range)
        val_set = None
    norm = compute_norm_stats(frame, cfg.variable, train_range, stations)
    model, history = train(cfg, train_set.samples, val_set, norm)
    meta = {
        "variable": cfg.variable,
        "train_range": [str(d) for d in train_range],
        "val_range": [str(d) for d in val_range],
        "test_years": list(cfg.test_years),
        "generalization": bool(args.generalization),
        "split_seed": args.split_seed,
        "fraction": args.fraction,
        "best_epoch": history.best_epoch,
        "steps": history.steps,
    }
    checkpoint.save(model, args.out, meta)
    if args.history:
        history.to_csv(args.history)
    rows = [{"epoch": r.epoch, "train_mse": r.train_mse, "val_mse": r.val_mse} for r in history.records]
    print(format_table(rows, ["epoch", "train_mse", "val_mse"]))
    print(f"saved {args.out} (best epoch {history.best_epoch}, {history.steps} steps)")
    return 0


def _eval_samples(args, frame, variable, meta, input_steps, output_steps):
    if args.range:
        rng = tuple(args.range)
    elif args.split == "train":
        rng = tuple(_date(d) for d in meta.get("train_range")) if meta.get("train_range") else \
            year_range(*meta.get("train_years", (2017, 2022)))
    elif args.split == "val":
        rng = tuple(_date(d) for d in meta.get("val_range")) if meta.get("val_range") else \
            year_range(*meta.get("val_years", (2023, 2023)))
    else:
        rng = year_range(*meta.get("test_years", (2024, 2024)))
    stations = None
    if args.generalization:
        seed = args.seed if args.seed is not None else meta.get("split_seed", 0)
        seen, unseen = split_stations(frame, args.fraction, seed)
        stations = unseen if args.split == "test" else seen
    return build_dataset(frame, variable, rng, input_steps, output_steps, stations=stations).samples


def _report(args, report: MetricsReport) -> int:
    regions = load_regions(args.regions) if args.regions else DEFAULT_REGIONS
    breakdown = regional_breakdown(report, regions)
    summary = report.summary()
    summary["regions"] = breakdown
    if args.json:
        print(json.dumps(summary, indent=2, default=float))
    else:
        print(format_table([{"variable": report.variable, "n": report.n, "mse": report.mse,
                             "mae": report.mae}], ["variable", "n", "mse", "mae"]))
        if len(summary["per_step"]) > 1:
            print(format_table(summary["per_step"], ["step", "mse", "mae"]))
        print(format_table(breakdown, ["region", "n_predictions", "mse", "mae"]))
    if args.report_out:
        report.to_json(args.report_out)
    return 0


def cmd_evaluate(args) -> int:
    model, meta = checkpoint.load(args.ckpt)
    frame = _load_frame(args.cache)
    cfg = model.config
    samples = _eval_samples(args, frame, meta["variable"], meta, cfg.input_steps, cfg.output_steps)
    return _report(args, evaluate(model, samples, meta["variable"]))


def cmd_rollout(args) -> int:
    model, meta = checkpoint.load(args.ckpt)
    if model.config.multistep:
        raise UsageError("rollout needs a single-step checkpoint")
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    frame = _load_frame(args.cache)
    samples = _eval_samples(args, frame, meta["variable"], meta, 1, args.steps)
    return _report(args, evaluate_rollout(model, samples, meta["variable"]))


def cmd_baseline(args) -> int:
    if not args.variable:
        raise UsageError("--variable is required")
    frame = _load_frame(args.cache)
    meta = {"train_years": args.train_years, "val_years": args.val_years, "test_years": args.test_years}
    samples = _eval_samples(args, frame, args.variable, meta, 1, args.steps)
    return _report(args, evaluate(Persistence(), samples, args.variable))


def cmd_export_errors(args) -> int:
    report = MetricsReport.from_json(args.report)
    export_station_errors(report, args.out, args.format)
    if args.predictions:
        export_predictions(report, args.predictions)
    print(f"wrote {len(report.per_station())} stations to {args.out}")
    return 0


def cmd_mesh(args) -> int:
    mesh = build_mesh(args.level)
    mesh.to_csv(args.out)
    print(f"wrote {mesh.n_nodes} nodes (level {args.level}) to {args.out}")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "rollout": cmd_rollout,
    "baseline": cmd_baseline,
    "export-errors": cmd_export_errors,
    "mesh": cmd_mesh,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, ModelError, MeshConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, GsodFormatError, SnapshotError, EvaluationError, checkpoint.CheckpointError,
            FileNotFoundError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
