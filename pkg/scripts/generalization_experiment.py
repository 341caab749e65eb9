"""Unseen-station MSE with and without the SH position embedding.

Trains on half the stations of a synthetic world and scores the other half
on later days, for several seeds.
"""

import argparse
import datetime as dt

import numpy as np

from mign.data import build_dataset, compute_norm_stats, split_stations
from mign.evaluate import Persistence, evaluate
from mign.model import ModelConfig
from mign.synthetic import SyntheticWorld
from mign.training import TrainConfig, train


def run(seed, steps, hidden, level, stations, days):
    world = SyntheticWorld(n_stations=stations, n_days=days, seed=seed)
    frame = world.frame()
    seen, unseen = split_stations(frame, 0.5, seed)
    cut = world.start + dt.timedelta(days=int(0.75 * days) - 1)
    train_set = build_dataset(frame, "MAX", (world.start, cut), stations=seen)
    test_set = build_dataset(frame, "MAX", (cut + dt.timedelta(days=1), world.end), stations=unseen)
    norm = compute_norm_stats(frame, "MAX", (world.start, cut), seen)
    base = ModelConfig(hidden=hidden, mesh_level=level)
    out = {"persistence": evaluate(Persistence(), test_set.samples).mse}
    for name, mc in (("sh", base), ("no_sh", base.without_sh())):
        cfg = TrainConfig(max_epochs=10**6, max_steps=steps, patience=10**9, seed=seed, model=mc)
        model, _ = train(cfg, train_set.samples, None, norm)
        out[name] = evaluate(model, test_set.samples).mse
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--mesh-level", type=int, default=2)
    ap.add_argument("--stations", type=int, default=400)
    ap.add_argument("--days", type=int, default=40)
    args = ap.parse_args()

    rows = []
    for seed in range(args.seeds):
        r = run(seed, args.steps, args.hidden, args.mesh_level, args.stations, args.days)
        rows.append(r)
        print(f"seed {seed}  sh {r['sh']:.3f}  no_sh {r['no_sh']:.3f}  persistence {r['persistence']:.3f}",
              flush=True)
    for key in ("sh", "no_sh", "persistence"):
        vals = np.array([r[key] for r in rows])
        print(f"{key:12s} mean {vals.mean():.3f}  sd {vals.std(ddof=1) if vals.size > 1 else 0.0:.3f}")


if __name__ == "__main__":
    main()
