"""Spherical coordinates, great-circle distances and kNN graphs on the unit sphere.

All angles are radians; distances are arc lengths on the unit sphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


class GeoError(ValueError):
    """Invalid coordinate or graph request."""


def wrap_lon(lon):
    """Wrap longitude(s) into [-pi, pi]; +pi is kept as +pi."""
    lon = np.asarray(lon, dtype=float)
    wrapped = (lon + np.pi) % (2 * np.pi) - np.pi
    # keep +pi rather than mapping it to -pi
    wrapped = np.where((wrapped == -np.pi) & (lon > 0), np.pi, wrapped)
    return wrapped if wrapped.ndim else float(wrapped)


@dataclass(frozen=True)
class GeoCoord:
    lon: float
    lat: float

    def __post_init__(self):
        if not math.isfinite(self.lat) or abs(self.lat) > math.pi / 2 + 1e-12:
            raise GeoError(f"latitude out of range: {self.lat!r} rad")
        if not math.isfinite(self.lon):
            raise GeoError(f"longitude not finite: {self.lon!r}")
        if abs(self.lon) > math.pi:
            object.__setattr__(self, "lon", wrap_lon(self.lon))
        object.__setattr__(self, "lat", max(-math.pi / 2, min(math.pi / 2, self.lat)))


def make_geo(lon_deg: float, lat_deg: float) -> GeoCoord:
    if not -90.0 <= lat_deg <= 90.0:
        raise GeoError(f"latitude out of range: {lat_deg!r} deg")
    return GeoCoord(wrap_lon(math.radians(lon_deg)), math.radians(lat_deg))


def deg_to_rad(lon_deg, lat_deg) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized make_geo returning (lon, lat) arrays in radians."""
    lon_deg = np.asarray(lon_deg, dtype=float)
    lat_deg = np.asarray(lat_deg, dtype=float)
    bad = ~np.isfinite(lat_deg) | (np.abs(lat_deg) > 90.0)
    if np.any(bad):
        raise GeoError(f"latitude out of range: {lat_deg[bad][:5].tolist()} deg")
    return np.atleast_1d(wrap_lon(np.radians(lon_deg))), np.radians(lat_deg)


def unit_vectors(lon, lat) -> np.ndarray:
    """(n, 3) array of unit vectors for coordinate arrays."""
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    cl = np.cos(lat)
    return np.stack([cl * np.cos(lon), cl * np.sin(lon), np.sin(lat)], axis=-1)


def geo_to_unit_vec(c: GeoCoord) -> tuple[float, float, float]:
    cl = math.cos(c.lat)
    return (cl * math.cos(c.lon), cl * math.sin(c.lon), math.sin(c.lat))


def unit_vec_to_geo(v) -> GeoCoord:
    x, y, z = v
    return GeoCoord(math.atan2(y, x), math.atan2(z, math.hypot(x, y)))


def haversine(lon1, lat1, lon2, lat2):
    """Broadcasting haversine distance in radians."""
    dlat = np.asarray(lat2) - np.asarray(lat1)
    dlon = np.asarray(lon2) - np.asarray(lon1)
    h = np.sin(dlat / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2) ** 2
    return 2.0 * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def great_circle_distance(a: GeoCoord, b: GeoCoord) -> float:
    return float(haversine(a.lon, a.lat, b.lon, b.lat))


@dataclass(frozen=True)
class EdgeList:
    """Directed edges src -> dst with great-circle lengths.

    ``neighbors[t]`` holds the source indices feeding target ``t`` ordered by
    (distance, source index); ``src``/``dst``/``distance`` are its flat view.
    """

    neighbors: np.ndarray
    distances: np.ndarray

    @property
    def n_targets(self) -> int:
        return self.neighbors.shape[0]

    @property
    def k(self) -> int:
        return self.neighbors.shape[1]

    @property
    def src(self) -> np.ndarray:
        return self.neighbors.reshape(-1)

    @property
    def dst(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_targets), self.k)

    @property
    def distance(self) -> np.ndarray:
        return self.distances.reshape(-1)

    def as_tuples(self) -> list[tuple[int, int, float]]:
        return list(zip(self.src.tolist(), self.dst.tolist(), self.distance.tolist()))


def _as_arrays(points):
    if isinstance(points, tuple) and len(points) == 2 and not isinstance(points[0], GeoCoord):
        lon, lat = points
        return np.asarray(lon, dtype=float).reshape(-1), np.asarray(lat, dtype=float).reshape(-1)
    pts = list(points)
    return (np.array([p.lon for p in pts], dtype=float),
            np.array([p.lat for p in pts], dtype=float))


def _chord2(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # squared chord length; arithmetic only so every code path rounds identically
    d0 = u[..., 0] - v[..., 0]
    d1 = u[..., 1] - v[..., 1]
    d2 = u[..., 2] - v[..., 2]
    return d0 * d0 + d1 * d1 + d2 * d2


def knn_edges(sources, targets, k: int, exclude_self: bool = False) -> EdgeList:
    """Edges into every target from its ``k`` nearest sources.

    ``sources``/``targets`` are either sequences of GeoCoord or ``(lon, lat)``
    array pairs. Candidates come from a KD-tree; ranking is by squared chord
    length (monotone in arc length) with ties broken by lower source index.
    With ``exclude_self`` both arguments are the same collection and a node
    never links to itself. Reported distances are great-circle radians.
    """
    if k < 1:
        raise GeoError(f"k must be >= 1, got {k}")
    slon, slat = _as_arrays(sources)
    tlon, tlat = _as_arrays(targets)
    n_src = slon.size
    if n_src == 0:
        raise GeoError("empty source set")
    if exclude_self and n_src < 2:
        raise GeoError("need at least 2 nodes to build a graph without self-loops")
    k_eff = min(k, n_src - 1 if exclude_self else n_src)
    n_tgt = tlon.size
    if n_tgt == 0:
        return EdgeList(np.zeros((0, k_eff), dtype=np.int64), np.zeros((0, k_eff)))

    svec = unit_vectors(slon, slat)
    tvec = svec if exclude_self else unit_vectors(tlon, tlat)
    want = k_eff + (1 if exclude_self else 0)
    if n_src <= 64 or want * 4 >= n_src:
        cand = np.broadcast_to(np.arange(n_src), (n_tgt, n_src)).copy()
    else:
        tree = cKDTree(svec)
        q = min(n_src, 2 * want + 4)
        while True:
            chord, cand = tree.query(tvec, k=q)
            chord = np.atleast_2d(chord)
            cand = np.atleast_2d(cand)
            if q >= n_src:
                break
            # every tie with the k-th candidate must fall inside the window
            margin = chord[:, want - 1] * (1 + 1e-9) + 1e-12
            if np.all(chord[:, -1] > margin):
                break
            q = min(n_src, 2 * q)
    key = _chord2(tvec[:, None, :], svec[cand])
    if exclude_self:
        key = np.where(cand == np.arange(n_tgt)[:, None], np.inf, key)
    order = np.lexsort((cand, key), axis=-1)[:, :k_eff]
    idx = np.take_along_axis(cand, order, axis=-1)
    tl, ta = tlon[:, None], tlat[:, None]
    dist = haversine(tl, ta, slon[idx], slat[idx])
    return EdgeList(idx.astype(np.int64), np.asarray(dist, dtype=float))


def brute_force_knn(sources, targets, k: int, exclude_self: bool = False) -> EdgeList:
    """All-pairs reference for ``knn_edges`` (plain Python loops)."""
    slon, slat = _as_arrays(sources)
    tlon, tlat = _as_arrays(targets)
    svec = unit_vectors(slon, slat).tolist()
    tvec = svec if exclude_self else unit_vectors(tlon, tlat).tolist()
    n_src = len(svec)
    k_eff = min(k, n_src - 1 if exclude_self else n_src)
    rows, dists = [], []
    for t, tv in enumerate(tvec):
        pairs = []
        for s, sv in enumerate(svec):
            if exclude_self and s == t:
                continue
            d0, d1, d2 = tv[0] - sv[0], tv[1] - sv[1], tv[2] - sv[2]
            pairs.append((d0 * d0 + d1 * d1 + d2 * d2, s))
        pairs.sort()
        chosen = [s for _, s in pairs[:k_eff]]
        rows.append(chosen)
        dists.append([great_circle_distance(GeoCoord(tlon[t], tlat[t]),
                                            GeoCoord(slon[s], slat[s])) for s in chosen])
    return EdgeList(np.array(rows, dtype=np.int64).reshape(-1, k_eff),
                    np.array(dists, dtype=float).reshape(-1, k_eff))
