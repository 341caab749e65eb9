import csv
import dataclasses
import datetime as dt
import json

import geojson
import numpy as np
import pytest
from conftest import TINY, make_sample, make_snapshot

from mign.data import build_dataset, make_frame
from mign.geo import brute_force_knn
from mign.model import MignModel, ModelConfig, forward
from mign.evaluate import (DEFAULT_REGIONS, EvaluationError, MetricsReport, Persistence, RegionSpec,
                           autoregressive_rollout, evaluate, evaluate_rollout, export_predictions,
                           export_station_errors, format_table, load_regions, persistence_forecast,
                           regional_breakdown)
from mign.snapshot import Sample

DAY = dt.date(2024, 1, 1)


def snap(values, ids=None, seed=0, date=DAY):
    s = make_snapshot(len(values), seed=seed, date=date, values=np.asarray(values, dtype=float))
    if ids is not None:
        s = type(s).from_arrays(date, s.variable, ids, s.lon, s.lat, s.values)
    return s


# persistence -------------------------------------------------------------------


def test_persistence_same_station():
    today = snap([280.0, 290.0])
    assert persistence_forecast(today, today.with_values([0.0, 0.0])).tolist() == [280.0, 290.0]


def test_persistence_constant_field():
    samples = [Sample((snap([281.0] * 5),), (snap([281.0] * 5, date=DAY + dt.timedelta(days=1)),))]
    assert evaluate(Persistence(), samples).mse == 0.0


def test_persistence_fallback_matches_brute_force():
    today = make_snapshot(30, seed=1)
    tomorrow = make_snapshot(12, seed=2)
    tomorrow = type(tomorrow).from_arrays(tomorrow.date, tomorrow.variable,
                                          [f"T{i}" for i in range(12)], tomorrow.lon, tomorrow.lat,
                                          tomorrow.values)
    p = Persistence()
    pred = p.predict(today, tomorrow)
    ref = brute_force_knn((today.lon, today.lat), (tomorrow.lon, tomorrow.lat), 1).neighbors[:, 0]
    np.testing.assert_array_equal(pred, today.values[ref])
    assert p.meta()["fallbacks"] == 12


def test_persistence_empty_input():
    s = make_snapshot(3)
    with pytest.raises(EvaluationError):
        persistence_forecast(s.subset(np.zeros(3, bool)), s)


def shifted_frame(n_days=4, n_stations=6):
    rng = np.random.default_rng(0)
    lon, lat = rng.uniform(-170, 170, n_stations), rng.uniform(-60, 60, n_stations)
    base = 280 + rng.normal(size=n_stations)
    ids, dates, lo, la, vals = [], [], [], [], []
    for d in range(n_days):
        ids += [f"S{i}" for i in range(n_stations)]
        dates += [DAY + dt.timedelta(days=d)] * n_stations
        lo += list(lon)
        la += list(lat)
        vals += list(base + d)
    return make_frame(ids, dates, lo, la, MAX=vals)


def test_shift_oracle():
    ds = build_dataset(shifted_frame(), "MAX", (DAY, DAY + dt.timedelta(days=3)))
    report = evaluate(Persistence(), ds.samples)
    assert report.mse == pytest.approx(1.0, abs=1e-9) and report.mae == pytest.approx(1.0, abs=1e-9)
    assert report.n == 18


def test_perfect_oracle():
    ds = build_dataset(shifted_frame(), "MAX", (DAY, DAY + dt.timedelta(days=3)))
    report = evaluate(lambda s: [t.values for t in s.targets], ds.samples)
    assert report.mse == 0.0 and report.mae == 0.0


def test_evaluate_deterministic():
    model = MignModel.init(TINY, seed=0, norm_mean=280.0, norm_std=3.0)
    samples = [make_sample(20, s) for s in range(2)]
    a, b = evaluate(model, samples), evaluate(model, samples)
    assert a.pred.tobytes() == b.pred.tobytes() and a.mse == b.mse


def test_evaluate_empty():
    with pytest.raises(EvaluationError):
        evaluate(Persistence(), [])


# rollout ---------------------------------------------------------------------------


def test_rollout_first_step_bitwise():
    model = MignModel.init(TINY, seed=3, norm_mean=280.0, norm_std=3.0)
    s = make_sample(20, 0, n_out=3)
    steps = autoregressive_rollout(model, s.inputs[0], list(s.targets))
    first = forward(s.inputs[0], s.targets[0].lon, s.targets[0].lat, model)
    assert steps[0].tobytes() == first.tobytes()
    assert evaluate_rollout(model, [s]).per_step()[0][1] == pytest.approx(evaluate(
        model, [Sample(s.inputs, s.targets[:1])]).mse, rel=0, abs=0)


def test_rollout_constant_model():
    model = MignModel.init(TINY, seed=3)
    for k in model.params:
        if k.startswith("dec."):
            model.params[k][...] = 0.0
    model.params["dec.1.b"][:] = 7.0
    s = make_sample(10, 0, n_out=3)
    for p in autoregressive_rollout(model, s.inputs[0], list(s.targets)):
        np.testing.assert_array_equal(p, 7.0)


def test_rollout_linear_composition():
    # one affine layer per MLP and no activations: forward is affine in the inputs,
    # y = A x + c, so two rollout steps equal A (A x + c) + c
    cfg = ModelConfig(hidden=4, n_layers=1, mesh_level=0, k_station_mesh=3, k_mesh_mesh=4, mlp_layers=1,
                      activation="identity", sh_degree=1)
    model = MignModel.init(cfg, seed=2)
    world = snap([1.0, -2.0, 0.5, 3.0, 0.0], seed=5)
    fwd = lambda x: forward(world.with_values(x), world.lon, world.lat, model)  # noqa: E731
    c = fwd(np.zeros(5))
    A = np.column_stack([fwd(np.eye(5)[i]) - c for i in range(5)])
    x0 = world.values
    steps = autoregressive_rollout(model, world, [world, world])
    np.testing.assert_allclose(steps[0], A @ x0 + c, atol=1e-12)
    np.testing.assert_allclose(steps[1], A @ (A @ x0 + c) + c, atol=1e-12)


def test_rollout_empty_step():
    model = MignModel.init(TINY)
    s = make_snapshot(5)
    with pytest.raises(EvaluationError):
        autoregressive_rollout(model, s, [s, s.subset(np.zeros(5, bool))])


# reports, regions and export ---------------------------------------------------------


def two_station_report():
    day1, day2 = DAY, DAY + dt.timedelta(days=1)
    return MetricsReport("MAX", np.array([0, 0, 1]), np.array([1, 1, 1]),
                         np.array([day1, day1, day2], dtype="datetime64[D]"), np.array(["B", "A", "B"]),
                         np.array([20.0, -100.0, 20.0]), np.array([0.0, 40.0, 0.0]),
                         np.array([281.0, 270.0, 285.0]), np.array([280.0, 272.0, 284.0]))


def test_report_aggregates():
    r = two_station_report()
    assert r.mse == pytest.approx(2.0) and r.mae == pytest.approx(4 / 3)
    stations = r.per_station()
    assert [s["station_id"] for s in stations] == ["A", "B"]
    assert stations[1]["mae"] == 1.0 and stations[1]["n_predictions"] == 2
    assert r.per_sample() == [(0, 2.5, 1.5), (1, 1.0, 1.0)]


def test_report_json_round_trip(tmp_path):
    r = two_station_report()
    r.to_json(tmp_path / "r.json")
    back = MetricsReport.from_json(tmp_path / "r.json")
    np.testing.assert_array_equal(back.pred, r.pred)
    assert back.station_id.tolist() == r.station_id.tolist() and back.mse == r.mse


def test_africa_point():
    africa = DEFAULT_REGIONS[0]
    assert africa.name == "Africa" and bool(africa.contains(20.0, 0.0))
    rows = regional_breakdown(two_station_report())
    assert rows[0]["n_predictions"] == 2


def test_globe_region_equals_global():
    r = two_station_report()
    (row, other) = regional_breakdown(r, [RegionSpec("globe", ((-180.0, 180.0),), (-90.0, 90.0))])
    assert row["mse"] == r.mse and row["mae"] == r.mae and other["n_predictions"] == 0


def test_disjoint_regions_partition():
    r = two_station_report()
    rows = regional_breakdown(r, [RegionSpec("west", ((-180.0, 0.0),), (-90.0, 90.0)),
                                  RegionSpec("east", ((0.001, 180.0),), (-90.0, 90.0))])
    assert sum(x["n_predictions"] for x in rows) == r.n


def test_load_regions(tmp_path):
    path = tmp_path / "regions.toml"
    path.write_text('[[region]]\nname = "Pacific"\nlon = [[150, 180], [-180, -120]]\nlat = [-30, 30]\n'
                    '[[region]]\nname = "Box"\nlon = [0, 10]\nlat = [0, 10]\n')
    regions = load_regions(path)
    assert [r.name for r in regions] == ["Pacific", "Box"]
    assert regions[0].contains(-150.0, 0.0) and not regions[0].contains(0.0, 0.0)


def test_export_csv(tmp_path):
    export_station_errors(two_station_report(), tmp_path / "e.csv")
    rows = list(csv.DictReader((tmp_path / "e.csv").open()))
    assert len(rows) == 2
    assert rows[0]["station_id"] == "A" and float(rows[0]["mae"]) == 2.0
    export_station_errors(MetricsReport.empty("MAX"), tmp_path / "empty.csv")
    assert (tmp_path / "empty.csv").read_text().strip() == "station_id,lon_deg,lat_deg,mae,n_predictions"


def test_export_geojson(tmp_path):
    export_station_errors(two_station_report(), tmp_path / "e.geojson", "geojson")
    fc = geojson.loads((tmp_path / "e.geojson").read_text())
    assert fc.is_valid and len(fc["features"]) == 2
    assert fc["features"][1]["geometry"]["coordinates"] == [20.0, 0.0]
    export_station_errors(MetricsReport.empty("MAX"), tmp_path / "empty.geojson", "geojson")
    assert json.loads((tmp_path / "empty.geojson").read_text()) == {"type": "FeatureCollection", "features": []}


def test_export_unwritable(tmp_path):
    with pytest.raises(OSError):
        export_station_errors(two_station_report(), tmp_path / "missing" / "e.csv")


def test_exported_predictions_recompute(tmp_path):
    ds = build_dataset(shifted_frame(), "MAX", (DAY, DAY + dt.timedelta(days=3)))
    report = evaluate(Persistence(), ds.samples)
    export_predictions(report, tmp_path / "p.csv")
    errs = np.array([float(r["error"]) for r in csv.DictReader((tmp_path / "p.csv").open())])
    assert abs(np.mean(errs**2) - report.mse) < 1e-9 and abs(np.mean(np.abs(errs)) - report.mae) < 1e-9


def test_format_table():
    text = format_table([{"region": "Africa", "mse": 1.5}], ["region", "mse"])
    assert text.splitlines()[1].split() == ["Africa", "1.5000"]


def test_temporal_model_evaluates():
    cfg = dataclasses.replace(TINY, input_steps=2, output_steps=2)
    model = MignModel.init(cfg, seed=0, norm_mean=280.0, norm_std=3.0)
    report = evaluate(model, [make_sample(15, 0, n_in=2, n_out=2)])
    assert [s for s, _, _ in report.per_step()] == [1, 2]
