"""Loss, gradients, Adam and the epoch loop."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import MignModel, ModelConfig, PreparedSample, sample_backward, sample_forward
from .snapshot import Sample

log = logging.getLogger(__name__)


class NumericError(ArithmeticError):
    """Non-finite loss or gradient."""


def _check_pair(pred, truth):
    pred = np.asarray(pred, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if pred.size != truth.size:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {truth.size} targets")
    if pred.size == 0:
        raise ValueError("empty prediction vector")
    return pred, truth


def mse(pred, truth) -> float:
    pred, truth = _check_pair(pred, truth)
    return float(np.mean((pred - truth) ** 2))


def sse(pred, truth) -> float:
    """Sum of squared errors (the unnormalized training objective)."""
    pred, truth = _check_pair(pred, truth)
    return float(np.sum((pred - truth) ** 2))


def mae(pred, truth) -> float:
    pred, truth = _check_pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 4
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    variable: str = "MAX"
    train_years: tuple[int, int] = (2017, 2022)
    val_years: tuple[int, int] = (2023, 2023)
    test_years: tuple[int, int] = (2024, 2024)
    max_steps: int | None = None
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def batch_loss(model: MignModel, batch: list[PreparedSample]) -> float:
    sq, count = 0.0, 0
    for ps in batch:
        preds, _ = sample_forward(model, ps)
        for p, t in zip(preds, ps.targets):
            sq += float(np.sum((p - t.y) ** 2))
            count += p.size
    return sq / count


def loss_and_grad(model: MignModel, batch: list[PreparedSample]) -> tuple[float, dict[str, np.ndarray]]:
    """Per-element mean squared error over the batch and its exact gradient."""
    if not batch:
        raise ValueError("empty batch")
    passes = []
    count = 0
    for i, ps in enumerate(batch):
        preds, cache = sample_forward(model, ps)
        for p, t in zip(preds, ps.targets):
            if t.y is None or t.y.size == 0:
                raise ValueError(f"batch element {i} has an empty or unlabeled target")
            count += p.size
        passes.append((preds, cache))
    sq = 0.0
    for i, (ps, (preds, _)) in enumerate(zip(batch, passes)):
        part = sum(float(np.sum((p - t.y) ** 2)) for p, t in zip(preds, ps.targets))
        if not np.isfinite(part):
            raise NumericError(f"non-finite loss in batch element {i}")
        sq += part
    grads: dict[str, np.ndarray] = {}
    for ps, (preds, cache) in zip(batch, passes):
        g_preds = [2.0 * (p - t.y) / count for p, t in zip(preds, ps.targets)]
        sample_backward(model, ps, cache, g_preds, grads)
    grads = {name: grads.get(name, np.zeros_like(v)) for name, v in model.params.items()}
    return sq / count, grads


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """In-place bias-corrected Adam update of ``params``."""
    bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise NumericError(f"non-finite gradients for {bad}; step refused")
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    for k, p in params.items():
        g = grads[k]
        if k not in state.m:
            state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        m, v = state.m[k], state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float
    wall_seconds: float


@dataclass
class History:
    records: list[EpochRecord] = field(default_factory=list)
    steps: int = 0
    best_epoch: int = 0

    def losses(self) -> list[tuple[int, float, float]]:
        """The deterministic part of the history (timings excluded)."""
        return [(r.epoch, r.train_mse, r.val_mse) for r in self.records]

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_mse", "val_mse", "wall_seconds"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.train_mse), repr(r.val_mse), f"{r.wall_seconds:.3f}"])


def train(config: TrainConfig, train_samples: list[Sample], val_samples: list[Sample] | None = None,
          norm: tuple[float, float] | None = None, model: MignModel | None = None):
    """Fit a model; returns (best-validation model, History).

    ``norm`` is the (mean, std) used to z-score inputs and targets; it
    defaults to statistics of the training inputs.
    """
    if not train_samples:
        raise ValueError("empty training set")
    if norm is None:
        vals = np.concatenate([s.values for smp in train_samples for s in smp.inputs])
        norm = (float(vals.mean()), max(float(vals.std()), 1e-6))
    if model is None:
        model = MignModel.init(config.model, seed=config.seed, norm_mean=norm[0], norm_std=norm[1])
    train_ps = [model.prepare_sample(s) for s in train_samples]
    val_ps = [model.prepare_sample(s) for s in val_samples] if val_samples else []
    scale = model.norm_std**2

    rng = np.random.default_rng(config.seed)
    state = AdamState()
    history = History()
    best = (np.inf, model.copy())
    stale = 0
    start = time.perf_counter()
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_ps))
        sq_sum, n_sum = 0.0, 0
        for lo in range(0, len(order), config.batch_size):
            batch = [train_ps[i] for i in order[lo:lo + config.batch_size]]
            loss, grads = loss_and_grad(model, batch)
            n = sum(t.y.size for ps in batch for t in ps.targets)
            sq_sum += loss * n
            n_sum += n
            adam_step(model.params, grads, state, config.learning_rate)
            history.steps += 1
            if config.max_steps is not None and history.steps >= config.max_steps:
                break
        train_mse = sq_sum / n_sum * scale
        val_mse = batch_loss(model, val_ps) * scale if val_ps else float("nan")
        history.records.append(EpochRecord(epoch, train_mse, val_mse, time.perf_counter() - start))
        log.info("epoch %d train_mse %.6g val_mse %.6g", epoch, train_mse, val_mse)
        score = val_mse if val_ps else batch_loss(model, train_ps) * scale
        if score < best[0]:
            best = (score, model.copy())
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
        if stale >= config.patience:
            break
        if config.max_steps is not None and history.steps >= config.max_steps:
            break
    return best[1], history


def grad_check(model: MignModel, batch: list[PreparedSample], eps: float = 1e-5, n_params: int = 200,
               seed: int = 0, grads: dict[str, np.ndarray] | None = None, return_details: bool = False):
    """Worst relative error between analytic and central-difference gradients.

    At least one entry from every tensor is probed and ``n_params`` in total.
    Relative error is |a - n| / max(|a|, |n|, 1e-8). Pass ``grads`` to check
    a given gradient set instead of recomputing it.
    """
    if grads is None:
        _, grads = loss_and_grad(model, batch)
    rng = np.random.default_rng(seed)
    picks = [(name, int(rng.integers(p.size))) for name, p in model.params.items()]
    sizes = np.array([p.size for p in model.params.values()], dtype=float)
    names = list(model.params)
    while len(picks) < n_params:
        name = names[int(rng.choice(len(names), p=sizes / sizes.sum()))]
        picks.append((name, int(rng.integers(model.params[name].size))))
    worst, details = 0.0, []
    for name, idx in picks:
        flat = model.params[name].reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + eps
        up = batch_loss(model, batch)
        flat[idx] = orig - eps
        down = batch_loss(model, batch)
        flat[idx] = orig
        numeric = (up - down) / (2 * eps)
        analytic = float(grads[name].reshape(-1)[idx])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        details.append((name, idx, analytic, numeric, err))
        worst = max(worst, err)
    return (worst, details) if return_details else worst
