"""Acceptance criteria 1-10.

Each test records one PASS/FAIL line, printed in the terminal summary. Run
just this file with ``pytest tests/test_acceptance.py -v``. Criterion 9 needs
an ingested GSOD archive: set GSOD_DIR to a directory of station CSVs (or
yearly tarballs) containing at least the 2024 test year.
"""

import dataclasses
import datetime as dt
import os
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES, TINY, make_sample
from scipy.spatial import cKDTree

from mign import checkpoint
from mign.data import build_dataset, compute_norm_stats, ingest, split_stations, year_range
from mign.evaluate import Persistence, autoregressive_rollout, evaluate, export_predictions
from mign.geo import brute_force_knn, knn_edges, unit_vectors
from mign.healpix import build_mesh, mesh_node_count
from mign.model import MignModel, ModelConfig, forward
from mign.sh import basis_size, sh_basis_array
from mign.synthetic import SyntheticWorld, static_field_frame
from mign.training import TrainConfig, grad_check, train


def record(n, ok, detail, seconds=None, budget=None):
    timing = ""
    if seconds is not None:
        timing = f" [{seconds:.1f}s / budget {budget}s]"
        ok = ok and seconds < budget
    ACCEPTANCE_LINES.append(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}{timing}")
    assert ok, detail


def test_criterion_01_node_count():
    t = time.perf_counter()
    got = [mesh_node_count(k) for k in range(6)]
    ok = got == [12, 48, 192, 768, 3072, 12288]
    record(1, ok, f"node counts {got}", time.perf_counter() - t, 1)


def test_criterion_02_mesh_structure():
    t = time.perf_counter()
    rng = np.random.default_rng(0)
    samples = rng.normal(size=(1_000_000, 3))
    samples /= np.linalg.norm(samples, axis=1)[:, None]
    parts, ok = [], True
    for k in (1, 2, 3):
        mesh = build_mesh(k)
        lat = np.sort(mesh.lat)
        rings = 1 + int(np.sum(np.diff(lat) > 1e-9))
        centers = unit_vectors(mesh.lon, mesh.lat)
        _, cell = cKDTree(centers).query(samples)
        area = np.bincount(cell, minlength=mesh.n_nodes) / samples.shape[0] * 4 * np.pi
        rel = area / (4 * np.pi / mesh.n_nodes) - 1
        rms = float(np.sqrt(np.mean(rel**2)))
        ok &= rings == 4 * 2**k - 1 and rms < 0.05
        parts.append(f"k={k}: {rings} rings, area rms dev {rms:.3f} (max cell {np.abs(rel).max():.3f})")
    record(2, ok, "; ".join(parts), time.perf_counter() - t, 60)


def test_criterion_03_sh_orthonormal():
    t = time.perf_counter()
    x, wx = np.polynomial.legendre.leggauss(256)
    lon = np.arange(512) * 2 * np.pi / 512
    LON, LAT = np.meshgrid(lon, np.arcsin(x))
    Y = sh_basis_array(LON.ravel(), LAT.ravel(), 3)
    w = np.repeat(wx, 512) * (2 * np.pi / 512)
    err = float(np.abs(Y.T @ (Y * w[:, None]) - np.eye(16)).max())
    record(3, Y.shape[1] == 16 and err < 1e-6, f"max |G - I| = {err:.2e}", time.perf_counter() - t, 60)


def test_criterion_04_basis_length():
    got = [basis_size(n) for n in range(4)]
    rows = [sh_basis_array(0.3, 0.2, n).shape[1] for n in range(4)]
    record(4, got == rows == [1, 4, 9, 16], f"lengths {rows}")


def test_criterion_05_grad_check():
    t = time.perf_counter()
    model = MignModel.init(TINY, seed=0, norm_mean=280.0, norm_std=3.0)
    batch = [model.prepare_sample(make_sample(20, 0))]
    err = grad_check(model, batch, eps=1e-3, n_params=200)
    record(5, err < 1e-4, f"max relative error {err:.2e} over 200 parameters (eps 1e-3)",
           time.perf_counter() - t, 120)


@pytest.mark.slow
def test_criterion_06_overfit():
    t = time.perf_counter()
    frame, _ = static_field_frame(200, degree=2, seed=0)
    ds = build_dataset(frame, "MAX", (dt.date(2020, 1, 1), dt.date(2020, 1, 2)))
    cfg = TrainConfig(learning_rate=1e-3, max_epochs=2000, max_steps=2000, patience=10**9,
                      model=ModelConfig(hidden=32, mesh_level=2))
    _, history = train(cfg, ds.samples, None, compute_norm_stats(frame, "MAX"))
    final = history.records[-1].train_mse
    record(6, final < 1e-2 and history.steps <= 2000,
           f"denormalized MSE {final:.2e} after {history.steps} steps", time.perf_counter() - t, 300)


def generalization_run(seed, steps=300):
    world = SyntheticWorld(n_stations=400, n_days=40, seed=seed)
    frame = world.frame()
    seen, unseen = split_stations(frame, 0.5, seed)
    mid = world.start + dt.timedelta(days=29)
    train_set = build_dataset(frame, "MAX", (world.start, mid), stations=seen)
    test_set = build_dataset(frame, "MAX", (mid + dt.timedelta(days=1), world.end), stations=unseen)
    norm = compute_norm_stats(frame, "MAX", (world.start, mid), seen)
    out = {}
    base = ModelConfig(hidden=32, mesh_level=2)
    for name, mc in (("sh", base), ("no_sh", base.without_sh())):
        cfg = TrainConfig(max_epochs=10**6, max_steps=steps, patience=10**9, seed=seed, model=mc)
        model, _ = train(cfg, train_set.samples, None, norm)
        out[name] = evaluate(model, test_set.samples).mse
    return out


@pytest.mark.slow
def test_criterion_07_generalization():
    t = time.perf_counter()
    runs = [generalization_run(seed) for seed in range(5)]
    sh = float(np.mean([r["sh"] for r in runs]))
    no_sh = float(np.mean([r["no_sh"] for r in runs]))
    record(7, sh <= no_sh, f"unseen-station MSE with SH {sh:.3f} vs without {no_sh:.3f} (5 seeds)",
           time.perf_counter() - t, 900)


def test_criterion_08_oracles(tmp_path):
    rng = np.random.default_rng(8)
    ok_knn = True
    for n_src, n_tgt, k in ((500, 200, 10), (300, 500, 3), (48, 48, 10)):
        src = (rng.uniform(-np.pi, np.pi, n_src), np.arcsin(rng.uniform(-1, 1, n_src)))
        tgt = (rng.uniform(-np.pi, np.pi, n_tgt), np.arcsin(rng.uniform(-1, 1, n_tgt)))
        ok_knn &= np.array_equal(knn_edges(src, tgt, k).neighbors, brute_force_knn(src, tgt, k).neighbors)
    mesh = build_mesh(1)
    pts = (mesh.lon, mesh.lat)
    ok_knn &= np.array_equal(knn_edges(pts, pts, 10, exclude_self=True).neighbors,
                             brute_force_knn(pts, pts, 10, exclude_self=True).neighbors)

    world = SyntheticWorld(n_stations=120, n_days=6, report_prob=0.8, seed=3)
    ds = build_dataset(world.frame(), "MAX", (world.start, world.end))
    report = evaluate(Persistence(), ds.samples)
    export_predictions(report, tmp_path / "p.csv")
    errs = np.loadtxt(tmp_path / "p.csv", delimiter=",", skiprows=1, usecols=8)
    metric_gap = max(abs(np.mean(errs**2) - report.mse), abs(np.mean(np.abs(errs)) - report.mae))

    model = MignModel.init(TINY, seed=1, norm_mean=285.0, norm_std=8.0)
    s = ds.samples[0]
    first = autoregressive_rollout(model, s.inputs[0], [s.targets[0], s.targets[0]])[0]
    single = forward(s.inputs[0], s.targets[0].lon, s.targets[0].lat, model)
    bitwise = first.tobytes() == single.tobytes()
    ok = bool(ok_knn) and metric_gap < 1e-9 and bitwise
    record(8, ok, f"kNN = brute force: {bool(ok_knn)}; metric recomputation gap {metric_gap:.1e}; "
                  f"rollout step 1 bitwise: {bitwise}")


@pytest.mark.data
def test_criterion_09_gsod_persistence():
    root = os.environ.get("GSOD_DIR")
    if not root:
        ACCEPTANCE_LINES.append("criterion  9: SKIP  set GSOD_DIR to a GSOD archive with the 2024 test year")
        pytest.skip("GSOD_DIR not set")
    t = time.perf_counter()
    frame, _ = ingest(root, cache=os.environ.get("GSOD_CACHE"))
    ds = build_dataset(frame, "MAX", year_range(2024, 2024))
    p = Persistence()
    mse = evaluate(p, ds.samples).mse
    ok = abs(mse - 9.98) <= 0.15 * 9.98
    record(9, ok, f"persistence MAX MSE {mse:.3f} (target 9.98 +/- 15%), "
                  f"fallback fraction {p.meta()['fallback_fraction']:.4f}", time.perf_counter() - t, 600)


def test_criterion_10_determinism(tmp_path):
    samples = [make_sample(20, s) for s in range(4)]
    val = [make_sample(20, 9)]
    cfg = TrainConfig(max_epochs=4, batch_size=2, seed=11, model=TINY)
    blobs, histories = [], []
    for run in range(2):
        model, history = train(cfg, samples, val)
        path = tmp_path / f"run{run}.ckpt"
        checkpoint.save(model, path, {"best_epoch": history.best_epoch})
        blobs.append(path.read_bytes())
        histories.append(repr(history.losses()).encode())
    same_ckpt = blobs[0] == blobs[1]
    same_hist = histories[0] == histories[1]
    record(10, same_ckpt and same_hist,
           f"checkpoints byte-identical: {same_ckpt}; loss histories byte-identical: {same_hist}")


def test_tiny_config_matches_criterion():
    # the configuration used by criteria 5 and 10
    assert (TINY.hidden, TINY.mesh_level, TINY.sh_degree, TINY.n_layers) == (8, 1, 2, 2)
    assert dataclasses.replace(TINY).n_basis == 9
