"""Real spherical harmonics and the learnable location embedding.

Basis rows are ordered by degree then order: (0,0), (1,-1), (1,0), (1,1),
(2,-2), ... The polar factor is evaluated at colatitude, the azimuthal
factor at longitude. Associated Legendre functions carry the
Condon-Shortley phase.
"""

from __future__ import annotations

import math

import numpy as np

from .geo import GeoCoord

MAX_DEGREE = 8


class ShError(ValueError):
    pass


def basis_size(degree_max: int) -> int:
    return (degree_max + 1) ** 2


def sh_index(n: int, m: int) -> int:
    return n * n + n + m


def legendre(n: int, x: float) -> float:
    if n < 0:
        raise ShError(f"degree must be >= 0, got {n}")
    if abs(x) > 1.0:
        raise ShError(f"legendre argument outside [-1, 1]: {x}")
    p_prev, p = 1.0, x
    if n == 0:
        return 1.0
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    return p


def _assoc_legendre_table(degree_max: int, x: np.ndarray) -> np.ndarray:
    """P[n, m] over 0 <= m <= n <= degree_max, broadcast over ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((degree_max + 1, degree_max + 1) + x.shape)
    somx2 = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    pmm = np.ones_like(x)
    for m in range(degree_max + 1):
        if m > 0:
            # P_m^m = (-1)^m (2m-1)!! (1-x^2)^(m/2), built one factor at a time
            pmm = -pmm * (2 * m - 1) * somx2
        out[m, m] = pmm
        if m + 1 <= degree_max:
            out[m + 1, m] = x * (2 * m + 1) * pmm
        for n in range(m + 2, degree_max + 1):
            out[n, m] = (x * (2 * n - 1) * out[n - 1, m] - (n + m - 1) * out[n - 2, m]) / (n - m)
    return out


def assoc_legendre(n: int, m: int, x: float) -> float:
    if not 0 <= m <= n:
        raise ShError(f"need 0 <= m <= n, got n={n}, m={m}")
    if abs(x) > 1.0:
        raise ShError(f"assoc_legendre argument outside [-1, 1]: {x}")
    return float(_assoc_legendre_table(n, np.float64(x))[n, m])


def _norm(n: int, m: int) -> float:
    return math.sqrt((2 * n + 1) / (4 * math.pi) * math.factorial(n - m) / math.factorial(n + m))


def sh_basis_array(lon, lat, degree_max: int) -> np.ndarray:
    """(n_points, (N+1)^2) real harmonics at coordinate arrays (radians).

    Orders m != 0 carry an extra sqrt(2) so the set is orthonormal on the
    sphere.
    """
    if degree_max < 0 or degree_max > MAX_DEGREE:
        raise ShError(f"degree must be in [0, {MAX_DEGREE}], got {degree_max}")
    lon = np.atleast_1d(np.asarray(lon, dtype=float))
    lat = np.atleast_1d(np.asarray(lat, dtype=float))
    # cos(colatitude) == sin(latitude)
    table = _assoc_legendre_table(degree_max, np.sin(lat))
    out = np.empty((lon.size, basis_size(degree_max)))
    for n in range(degree_max + 1):
        for m in range(-n, n + 1):
            am = abs(m)
            polar = _norm(n, am) * table[n, am]
            if m < 0:
                col = math.sqrt(2.0) * polar * np.sin(am * lon)
            elif m == 0:
                col = polar
            else:
                col = math.sqrt(2.0) * polar * np.cos(m * lon)
            out[:, sh_index(n, m)] = col
    return out


def real_sh(n: int, m: int, c: GeoCoord) -> float:
    if abs(m) > n:
        raise ShError(f"need |m| <= n, got n={n}, m={m}")
    return float(sh_basis_array(c.lon, c.lat, n)[0, sh_index(n, m)])


def sh_basis(c: GeoCoord, degree_max: int) -> np.ndarray:
    return sh_basis_array(c.lon, c.lat, degree_max)[0]


def sh_embed(x: float, c: GeoCoord, w: np.ndarray) -> np.ndarray:
    """Feature followed by coefficient-weighted basis values."""
    w = np.asarray(w, dtype=float)
    size = w.size
    degree = math.isqrt(size) - 1
    if size == 0 or (degree + 1) ** 2 != size:
        raise ShError(f"coefficient length {size} is not a square (N+1)^2")
    return np.concatenate([[float(x)], w * sh_basis(c, degree)])
