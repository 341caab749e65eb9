"""Per-day station observations and forecast samples."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

VARIABLES = ("MAX", "MIN", "DEWP", "SLP", "WDSP", "MXSPD")


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class StationSnapshot:
    """One variable observed at a set of stations on one day.

    Coordinates are radians; ``values`` are physical units.
    """

    date: dt.date
    variable: str
    station_ids: np.ndarray
    lon: np.ndarray
    lat: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        n = len(self.station_ids)
        if not (len(self.lon) == len(self.lat) == len(self.values) == n):
            raise SnapshotError("station_ids, lon, lat and values must have equal length")
        if len(np.unique(self.station_ids)) != n:
            raise SnapshotError(f"duplicate station ids in snapshot for {self.date}")
        if not np.all(np.isfinite(self.values)):
            raise SnapshotError(f"non-finite values in snapshot for {self.date}")

    def __len__(self) -> int:
        return len(self.station_ids)

    @classmethod
    def from_arrays(cls, date, variable, station_ids, lon, lat, values) -> "StationSnapshot":
        return cls(date, variable, np.asarray(station_ids).astype(str),
                   np.asarray(lon, dtype=float), np.asarray(lat, dtype=float),
                   np.asarray(values, dtype=float))

    def with_values(self, values) -> "StationSnapshot":
        return StationSnapshot(self.date, self.variable, self.station_ids, self.lon, self.lat,
                               np.asarray(values, dtype=float))

    def subset(self, mask) -> "StationSnapshot":
        mask = np.asarray(mask)
        return StationSnapshot(self.date, self.variable, self.station_ids[mask], self.lon[mask],
                               self.lat[mask], self.values[mask])


@dataclass(frozen=True)
class Sample:
    """Input days t-n..t and target days t+1..t+m for one variable."""

    inputs: tuple[StationSnapshot, ...]
    targets: tuple[StationSnapshot, ...]

    @property
    def date(self) -> dt.date:
        return self.inputs[-1].date
