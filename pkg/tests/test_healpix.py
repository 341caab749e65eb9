import numpy as np
import pytest

from mign.geo import brute_force_knn, haversine
from mign.healpix import MeshConfigError, build_mesh, mesh_graph, mesh_node_count


@pytest.mark.parametrize("level,count", [(0, 12), (3, 768), (5, 12288)])
def test_node_count(level, count):
    assert mesh_node_count(level) == count


def ring_groups(mesh):
    lat = np.sort(mesh.lat)
    return np.split(lat, np.flatnonzero(np.diff(lat) > 1e-9) + 1)


def test_base_level_rings():
    mesh = build_mesh(0)
    groups = ring_groups(mesh)
    # z = 2/3, 0, -2/3: three iso-latitude rings of four centers
    assert [g.size for g in groups] == [4, 4, 4]
    np.testing.assert_allclose([g[0] for g in groups], np.arcsin([-2 / 3, 0, 2 / 3]), atol=1e-15)


@pytest.mark.parametrize("level", range(0, 5))
def test_ring_count_and_size(level):
    mesh = build_mesh(level)
    assert mesh.n_nodes == mesh_node_count(level)
    assert len(ring_groups(mesh)) == 4 * mesh.nside - 1


@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_equator_symmetry(level):
    lat = np.sort(build_mesh(level).lat)
    np.testing.assert_allclose(lat, -lat[::-1], atol=1e-12)


@pytest.mark.parametrize("level", [0, 2, 3])
def test_nodes_distinct(level):
    mesh = build_mesh(level)
    d = haversine(mesh.lon[:, None], mesh.lat[:, None], mesh.lon[None], mesh.lat[None])
    np.fill_diagonal(d, np.inf)
    assert d.min() > 0


def test_build_is_deterministic():
    a, b = build_mesh(3), build_mesh(3)
    assert a.lon.tobytes() == b.lon.tobytes() and a.lat.tobytes() == b.lat.tobytes()


def test_level_cap():
    with pytest.raises(MeshConfigError):
        build_mesh(7)
    with pytest.raises(MeshConfigError):
        build_mesh(-1)


def test_base_mesh_complete_graph():
    mesh = build_mesh(0)
    e = mesh_graph(mesh, 11)
    for t in range(12):
        assert sorted(e.neighbors[t].tolist()) == [i for i in range(12) if i != t]


def test_level1_graph_matches_brute_force():
    mesh = build_mesh(1)
    pts = (mesh.lon, mesh.lat)
    np.testing.assert_array_equal(mesh_graph(mesh, 2).neighbors,
                                  brute_force_knn(pts, pts, 2, exclude_self=True).neighbors)


@pytest.mark.parametrize("level,k", [(2, 10), (3, 10)])
def test_graph_no_self_loops(level, k):
    e = mesh_graph(build_mesh(level), k)
    assert e.neighbors.shape == (mesh_node_count(level), k)
    assert not np.any(e.neighbors == np.arange(e.n_targets)[:, None])


def test_csv_export(tmp_path):
    path = tmp_path / "mesh.csv"
    build_mesh(1).to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "index,lon_deg,lat_deg"
    assert len(lines) == 49


@pytest.mark.parametrize("level", [2, 3, 4])
def test_exact_voronoi_areas_within_five_percent(level):
    from scipy.spatial import SphericalVoronoi

    mesh = build_mesh(level)
    pts = np.stack([np.cos(mesh.lat) * np.cos(mesh.lon), np.cos(mesh.lat) * np.sin(mesh.lon), np.sin(mesh.lat)], 1)
    rel = SphericalVoronoi(pts).calculate_areas() / (4 * np.pi / mesh.n_nodes) - 1
    assert np.abs(rel).max() < 0.05


@pytest.mark.parametrize("level", range(0, 5))
def test_centers_match_reference_library(level):
    hp = pytest.importorskip("healpy")
    mesh = build_mesh(level)
    theta, phi = hp.pix2ang(mesh.nside, np.arange(mesh.n_nodes))

    def canonical(lat, lon):
        pts = np.round(np.stack([lat, np.mod(lon, 2 * np.pi)], 1), 9)
        return pts[np.lexsort(pts.T[::-1])]

    np.testing.assert_allclose(canonical(mesh.lat, mesh.lon), canonical(np.pi / 2 - theta, phi), atol=1e-12)
