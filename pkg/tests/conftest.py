import datetime as dt

import numpy as np
import pytest

from mign.model import ModelConfig
from mign.snapshot import Sample, StationSnapshot
from mign.synthetic import random_sphere_points

TINY = ModelConfig(hidden=8, mesh_level=1, sh_degree=2, n_layers=2)


def make_snapshot(n=20, seed=0, date=dt.date(2020, 1, 1), values=None, variable="MAX"):
    rng = np.random.default_rng(seed)
    lon, lat = random_sphere_points(n, rng)
    if values is None:
        values = 280.0 + 5.0 * rng.normal(size=n)
    ids = [f"S{i:05d}" for i in range(n)]
    return StationSnapshot.from_arrays(date, variable, ids, lon, lat, values)


def make_sample(n=20, seed=0, n_in=1, n_out=1):
    day = dt.date(2020, 1, 1)
    snaps = [make_snapshot(n, seed, day + dt.timedelta(days=i),
                           values=280.0 + np.random.default_rng(seed + 100 + i).normal(size=n) * 3)
             for i in range(n_in + n_out)]
    return Sample(tuple(snaps[:n_in]), tuple(snaps[n_in:]))


@pytest.fixture
def tiny_config():
    return TINY


# acceptance summary: one line per criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
