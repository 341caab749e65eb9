"""Fit one static degree-2 field at 200 stations and print the loss curve."""

import argparse
import datetime as dt
import time

from mign.data import build_dataset, compute_norm_stats
from mign.model import ModelConfig
from mign.synthetic import static_field_frame
from mign.training import TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--mesh-level", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    frame, _ = static_field_frame(200, degree=2, seed=args.seed)
    ds = build_dataset(frame, "MAX", (dt.date(2020, 1, 1), dt.date(2020, 1, 2)))
    cfg = TrainConfig(learning_rate=1e-3, max_epochs=args.steps, max_steps=args.steps, patience=10**9,
                      seed=args.seed, model=ModelConfig(hidden=args.hidden, mesh_level=args.mesh_level))
    t = time.perf_counter()
    _, history = train(cfg, ds.samples, None, compute_norm_stats(frame, "MAX"))
    for r in history.records[:: max(1, len(history.records) // 20)]:
        print(f"epoch {r.epoch:5d}  train mse {r.train_mse:.4e}")
    print(f"final mse {history.records[-1].train_mse:.4e} after {history.steps} steps "
          f"in {time.perf_counter() - t:.1f}s")


if __name__ == "__main__":
    main()
