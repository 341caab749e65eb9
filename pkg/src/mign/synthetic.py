"""Synthetic station worlds with known spherical-harmonic structure."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data import make_frame
from .sh import basis_size, sh_basis_array


def random_sphere_points(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Uniform points on the sphere as (lon, lat) radians."""
    lon = rng.uniform(-np.pi, np.pi, n)
    lat = np.arcsin(rng.uniform(-1.0, 1.0, n))
    return lon, lat


def sh_field(lon, lat, coeffs: np.ndarray) -> np.ndarray:
    degree = int(round(np.sqrt(coeffs.size))) - 1
    return sh_basis_array(lon, lat, degree) @ coeffs


def random_sh_coefficients(degree: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    return rng.normal(0.0, scale, basis_size(degree))


def static_field_frame(n_stations: int = 200, degree: int = 2, seed: int = 0, offset: float = 280.0,
                       scale: float = 1.0, variable: str = "MAX", n_days: int = 2,
                       start: dt.date = dt.date(2020, 1, 1)) -> tuple[pd.DataFrame, np.ndarray]:
    """The same SH field observed on ``n_days`` consecutive days; returns (frame, coeffs)."""
    rng = np.random.default_rng(seed)
    lon, lat = random_sphere_points(n_stations, rng)
    coeffs = random_sh_coefficients(degree, rng, scale)
    values = offset + sh_field(lon, lat, coeffs)
    ids = [f"S{i:05d}" for i in range(n_stations)]
    days = [start + dt.timedelta(days=d) for d in range(n_days)]
    frame = make_frame(np.tile(ids, n_days), np.repeat(days, n_stations),
                       np.degrees(np.tile(lon, n_days)), np.degrees(np.tile(lat, n_days)),
                       **{variable: np.tile(values, n_days)})
    return frame, coeffs


@dataclass
class SyntheticWorld:
    """Climatology plus an AR(1) anomaly field sampled at random stations.

    value(s, t) = base + clim(s) + anomaly_t(s) + noise, where clim is a
    fixed degree-``clim_degree`` SH combination and anomaly_t evolves its SH
    coefficients as an AR(1) process with lag-one correlation ``rho``.
    """

    n_stations: int = 400
    n_days: int = 60
    start: dt.date = dt.date(2020, 1, 1)
    variable: str = "MAX"
    base: float = 285.0
    clim_degree: int = 2
    clim_scale: float = 8.0
    anomaly_degree: int = 3
    anomaly_scale: float = 3.0
    rho: float = 0.5
    noise: float = 0.0
    report_prob: float = 1.0
    seed: int = 0

    def frame(self) -> pd.DataFrame:
        rng = np.random.default_rng(self.seed)
        lon, lat = random_sphere_points(self.n_stations, rng)
        clim = sh_field(lon, lat, random_sh_coefficients(self.clim_degree, rng, self.clim_scale))
        anom_basis = sh_basis_array(lon, lat, self.anomaly_degree)
        a = rng.normal(0.0, self.anomaly_scale, anom_basis.shape[1])
        ids = np.array([f"S{i:05d}" for i in range(self.n_stations)])
        cols = {"ids": [], "date": [], "lon": [], "lat": [], "val": []}
        for d in range(self.n_days):
            values = self.base + clim + anom_basis @ a + rng.normal(0.0, self.noise, self.n_stations)
            mask = rng.uniform(size=self.n_stations) < self.report_prob
            cols["ids"].append(ids[mask])
            cols["date"].append(np.full(mask.sum(), np.datetime64(self.start + dt.timedelta(days=d), "D")))
            cols["lon"].append(lon[mask])
            cols["lat"].append(lat[mask])
            cols["val"].append(values[mask])
            innov = rng.normal(0.0, self.anomaly_scale, a.size)
            a = self.rho * a + np.sqrt(1.0 - self.rho**2) * innov
        cat = {k: np.concatenate(v) for k, v in cols.items()}
        return make_frame(cat["ids"], cat["date"], np.degrees(cat["lon"]), np.degrees(cat["lat"]),
                          **{self.variable: cat["val"]})

    @property
    def end(self) -> dt.date:
        return self.start + dt.timedelta(days=self.n_days - 1)
