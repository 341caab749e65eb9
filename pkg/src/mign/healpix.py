"""HEALPix ring-scheme pixel centers and the mesh-mesh kNN graph."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geo import EdgeList, GeoCoord, knn_edges, wrap_lon

MAX_LEVEL = 6


class MeshConfigError(ValueError):
    pass


def mesh_node_count(level: int) -> int:
    if level < 0:
        raise MeshConfigError(f"refinement level must be >= 0, got {level}")
    return 12 * 4**level


def ring_centers(nside: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pixel-center (lon, lat, ring) arrays for the ring scheme, north to south.

    Within a ring pixels run eastward starting at the first center past
    longitude 0.
    """
    lons, lats, rings = [], [], []
    for i in range(1, 4 * nside):
        if i < nside:
            z = 1.0 - i * i / (3.0 * nside * nside)
            npix = 4 * i
            phi = np.pi / (2 * i) * (np.arange(1, npix + 1) - 0.5)
        elif i <= 3 * nside:
            z = 4.0 / 3.0 - 2.0 * i / (3.0 * nside)
            npix = 4 * nside
            s = (i - nside + 1) % 2
            phi = np.pi / (2 * nside) * (np.arange(1, npix + 1) - s / 2.0)
        else:
            ii = 4 * nside - i
            z = -(1.0 - ii * ii / (3.0 * nside * nside))
            npix = 4 * ii
            phi = np.pi / (2 * ii) * (np.arange(1, npix + 1) - 0.5)
        lons.append(phi)
        lats.append(np.full(npix, np.arcsin(z)))
        rings.append(np.full(npix, i))
    return wrap_lon(np.concatenate(lons)), np.concatenate(lats), np.concatenate(rings)


@dataclass(frozen=True)
class HealpixMesh:
    level: int
    lon: np.ndarray
    lat: np.ndarray
    ring: np.ndarray = field(repr=False)

    @property
    def nside(self) -> int:
        return 2**self.level

    @property
    def n_nodes(self) -> int:
        return self.lon.size

    @property
    def nodes(self) -> list[GeoCoord]:
        return [GeoCoord(float(a), float(b)) for a, b in zip(self.lon, self.lat)]

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "lon_deg", "lat_deg"])
            for i, (a, b) in enumerate(zip(np.degrees(self.lon), np.degrees(self.lat))):
                w.writerow([i, repr(float(a)), repr(float(b))])


def build_mesh(level: int) -> HealpixMesh:
    if level < 0 or level > MAX_LEVEL:
        raise MeshConfigError(f"refinement level must be in [0, {MAX_LEVEL}], got {level}")
    lon, lat, ring = ring_centers(2**level)
    for a in (lon, lat, ring):
        a.setflags(write=False)
    return HealpixMesh(level, lon, lat, ring)


def mesh_graph(mesh: HealpixMesh, k_neighbors: int) -> EdgeList:
    """Directed edges into each node from its ``k_neighbors`` nearest other nodes."""
    if mesh.n_nodes < 2:
        raise MeshConfigError("mesh graph needs at least 2 nodes")
    return knn_edges((mesh.lon, mesh.lat), (mesh.lon, mesh.lat), k_neighbors, exclude_self=True)
