import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mign.geo import GeoCoord
from mign.sh import (ShError, assoc_legendre, basis_size, legendre, real_sh, sh_basis, sh_basis_array,
                     sh_embed)

Y00 = 1 / math.sqrt(4 * math.pi)
NORTH = GeoCoord(0.0, math.pi / 2)


def test_legendre_examples():
    assert legendre(0, 0.7) == 1.0
    assert legendre(1, 0.5) == 0.5
    assert legendre(2, 0.5) == pytest.approx(-0.125, abs=1e-15)


def test_legendre_domain():
    with pytest.raises(ShError):
        legendre(2, 1.5)


@given(st.integers(0, 8), st.floats(-1, 1))
def test_assoc_order_zero_is_legendre(n, x):
    assert assoc_legendre(n, 0, x) == pytest.approx(legendre(n, x), abs=1e-12)


def test_assoc_examples():
    assert assoc_legendre(1, 1, 0.0) == pytest.approx(-1.0)
    assert assoc_legendre(2, 2, 0.0) == pytest.approx(3.0)
    with pytest.raises(ShError):
        assoc_legendre(1, 2, 0.0)


def test_assoc_closed_forms():
    # P_2^1(x) = -3x sqrt(1-x^2), P_3^3(x) = -15 (1-x^2)^(3/2)
    for x in np.linspace(-1, 1, 9):
        s = math.sqrt(1 - x * x)
        assert assoc_legendre(2, 1, x) == pytest.approx(-3 * x * s, abs=1e-13)
        assert assoc_legendre(3, 3, x) == pytest.approx(-15 * s**3, abs=1e-12)


def test_real_sh_examples():
    assert real_sh(0, 0, GeoCoord(1.0, -0.3)) == pytest.approx(Y00)
    assert real_sh(1, 0, NORTH) == pytest.approx(math.sqrt(3 / (4 * math.pi)))
    assert real_sh(2, -1, GeoCoord(0.0, 0.4)) == 0.0
    with pytest.raises(ShError):
        real_sh(1, 2, NORTH)


@pytest.mark.parametrize("degree,length", [(0, 1), (1, 4), (2, 9), (3, 16)])
def test_basis_length(degree, length):
    assert basis_size(degree) == length
    assert sh_basis(GeoCoord(0.2, 0.1), degree).shape == (length,)


def test_embed_examples():
    c = GeoCoord(0.5, 0.2)
    np.testing.assert_array_equal(sh_embed(3.0, c, np.zeros(9)), [3.0] + [0.0] * 9)
    np.testing.assert_allclose(sh_embed(1.5, c, np.ones(1)), [1.5, Y00])
    e1 = np.zeros(9)
    e1[0] = 1.0
    np.testing.assert_allclose(sh_embed(0.0, c, e1), [0.0, Y00] + [0.0] * 8)
    with pytest.raises(ShError):
        sh_embed(0.0, c, np.ones(5))


def gram(degree, n_lat=256, n_lon=512):
    x, wx = np.polynomial.legendre.leggauss(n_lat)
    lat = np.arcsin(x)
    lon = np.arange(n_lon) * 2 * np.pi / n_lon
    LON, LAT = np.meshgrid(lon, lat)
    Y = sh_basis_array(LON.ravel(), LAT.ravel(), degree)
    w = np.repeat(wx, n_lon) * (2 * np.pi / n_lon)
    return Y.T @ (Y * w[:, None])


def test_orthonormal_degree4():
    np.testing.assert_allclose(gram(4, 64, 128), np.eye(25), atol=1e-10)


def test_addition_theorem():
    # sum_m Y_nm(p)^2 = (2n+1)/(4 pi) for every point
    rng = np.random.default_rng(0)
    Y = sh_basis_array(rng.uniform(-3, 3, 20), rng.uniform(-1.5, 1.5, 20), 5)
    for n in range(6):
        np.testing.assert_allclose((Y[:, n * n:(n + 1) ** 2] ** 2).sum(1), (2 * n + 1) / (4 * math.pi))


def test_embed_linear_in_coefficients():
    # gradient of the embedding w.r.t. w is the basis itself
    c = GeoCoord(-1.1, 0.6)
    w = np.random.default_rng(1).normal(size=9)
    eps = 1e-6
    for i in range(9):
        d = np.zeros(9)
        d[i] = eps
        fd = (sh_embed(0.0, c, w + d) - sh_embed(0.0, c, w - d)) / (2 * eps)
        np.testing.assert_allclose(fd[1:], np.eye(9)[i] * sh_basis(c, 2), atol=1e-9)
