import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glassfrac.errors import DegenerateGeometryError, InvalidArgumentError
from glassfrac.mesh_gen import (
    ParticleSet,
    build_neighbor_index,
    default_radius,
    query_radius,
    sample_particles,
    triangulate,
)
from oracles import brute_radius, in_circle, segments_cross


def test_sample_three_points_inside_extent():
    ps = sample_particles(3, (10, 10), seed=7)
    assert len(ps) == 3
    assert len({tuple(p) for p in ps.positions}) == 3
    assert ((ps.positions >= 0) & (ps.positions < 10)).all()


def test_sample_is_deterministic_per_seed():
    a = sample_particles(10_000, (1242, 375), seed=11)
    b = sample_particles(10_000, (1242, 375), seed=11)
    assert a.positions.tobytes() == b.positions.tobytes()
    c = sample_particles(10_000, (1242, 375), seed=12)
    assert a.positions.tobytes() != c.positions.tobytes()


@pytest.mark.parametrize("seed", range(5))
def test_sample_mean_is_centered(seed):
    # sd of the mean of 1000 U(0,100) draws is 100/sqrt(12000) ~ 0.91,
    # so +-5 is more than 5 sd
    ps = sample_particles(1000, (100, 100), seed=seed)
    assert abs(ps.positions[:, 0].mean() - 50.0) <= 5.0
    assert abs(ps.positions[:, 1].mean() - 50.0) <= 5.0


def test_sample_uniformity_chi_square():
    from scipy.stats import chisquare

    ps = sample_particles(10_000, (100, 50), seed=5)
    counts, _, _ = np.histogram2d(ps.positions[:, 0], ps.positions[:, 1], bins=(10, 5), range=[[0, 100], [0, 50]])
    assert chisquare(counts.ravel()).pvalue > 1e-3


def test_sample_rejects_bad_arguments():
    with pytest.raises(InvalidArgumentError):
        sample_particles(2, (10, 10), 0)
    with pytest.raises(InvalidArgumentError):
        sample_particles(10, (0, 10), 0)


def test_sample_resamples_duplicates(monkeypatch):
    real = np.random.default_rng

    class DupRng:
        def __init__(self, seed):
            self._rng = real(seed)
            self.calls = 0

        def uniform(self, lo, hi, n):
            # the first x and y draws put every point at (1, 1)
            self.calls += 1
            if self.calls <= 2:
                return np.full(n, 1.0)
            return self._rng.uniform(lo, hi, n)

    monkeypatch.setattr(np.random, "default_rng", DupRng)
    ps = sample_particles(5, (10, 10), seed=1)
    assert len(np.unique(ps.positions, axis=0)) == 5


def test_index_single_point():
    ps = ParticleSet(np.array([[1.0, 2.0]]), 5, 5)
    idx = build_neighbor_index(ps)
    assert set(query_radius(idx, (1.0, 2.0), 0.0)) == {0}
    assert set(query_radius(idx, (0.0, 0.0), 3.0)) == {0}


def test_zero_radius_off_particle_is_empty():
    ps = sample_particles(50, (10, 10), 1)
    idx = build_neighbor_index(ps)
    assert len(query_radius(idx, (5.123456, 5.654321), 0.0)) == 0


def test_radius_query_distances():
    pts = np.array([[1.0, 0.0], [0.0, 2.0], [3.0, 0.0]])
    idx = build_neighbor_index(ParticleSet(pts, 5, 5))
    assert set(query_radius(idx, (0.0, 0.0), 2.0)) == {0, 1}
    assert set(query_radius(idx, pts[2], 0.0)) == {2}


def test_negative_radius_rejected():
    idx = build_neighbor_index(sample_particles(5, (10, 10), 0))
    with pytest.raises(InvalidArgumentError):
        query_radius(idx, (1, 1), -1.0)


def test_radius_query_matches_brute_force_per_point():
    ps = sample_particles(100, (50, 50), seed=4)
    idx = build_neighbor_index(ps)
    for p in ps.positions:
        assert set(query_radius(idx, p, 5.0)) == brute_radius(ps.positions, p, 5.0)


def test_radius_query_random_centres():
    rng = np.random.default_rng(9)
    ps = sample_particles(500, (100, 80), seed=9)
    idx = build_neighbor_index(ps)
    for _ in range(50):
        c = rng.uniform((0, 0), (100, 80))
        r = rng.uniform(0, 15)
        assert set(query_radius(idx, c, r)) == brute_radius(ps.positions, c, r)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 300),
    seed=st.integers(0, 2**31),
    r=st.floats(0, 30, allow_nan=False),
    cx=st.floats(-10, 110, allow_nan=False),
    cy=st.floats(-10, 110, allow_nan=False),
)
def test_radius_query_property(n, seed, r, cx, cy):
    pts = np.random.default_rng(seed).uniform(0, 100, size=(n, 2))
    idx = build_neighbor_index(ParticleSet(pts, 100, 100))
    assert set(query_radius(idx, (cx, cy), r)) == brute_radius(pts, (cx, cy), r)


def test_nearest_prefers_lowest_id_on_tie():
    pts = np.array([[2.0, 0.0], [0.0, 0.0], [4.0, 0.0]])
    idx = build_neighbor_index(ParticleSet(pts, 5, 5))
    assert idx.nearest((1.0, 0.0)) == 0
    assert idx.nearest((3.0, 0.0)) == 0


def test_default_radius():
    assert default_radius(10_000, 1242, 375) == pytest.approx(1.5 * np.sqrt(1242 * 375 / 10_000))


def test_triangle_mesh():
    m = triangulate(ParticleSet(np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 1.5]]), 3, 3))
    assert len(m.triangles) == 1
    assert len(m.edges) == 3


def test_square_mesh():
    pts = np.array([[1.0, 1.0], [3.0, 1.0], [3.0, 3.0], [1.0, 3.0]])
    m = triangulate(ParticleSet(pts, 4, 4))
    assert len(m.triangles) == 2
    assert len(m.edges) == 5


def test_collinear_raises():
    pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    with pytest.raises(DegenerateGeometryError):
        triangulate(ParticleSet(pts, 5, 5))


def _check_complex(mesh):
    pts = mesh.points
    # every edge appears in one or two triangles, no duplicates
    edge_tris = {}
    for t in mesh.triangles:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            edge_tris.setdefault(tuple(sorted((int(a), int(b)))), []).append(t)
    assert set(edge_tris) == {tuple(e) for e in mesh.edges.tolist()}
    assert len(mesh.edges) == len({tuple(e) for e in mesh.edges.tolist()})
    assert all(1 <= len(v) <= 2 for v in edge_tris.values())
    # triangles are non-degenerate and counter-clockwise
    for t in mesh.triangles:
        a, b, c = pts[t]
        assert (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) > 0
    # no two edges cross in their interiors
    E = mesh.edges
    for i in range(len(E)):
        for j in range(i + 1, len(E)):
            if len({*E[i], *E[j]}) < 4:
                continue
            assert not segments_cross(pts[E[i][0]], pts[E[i][1]], pts[E[j][0]], pts[E[j][1]])
    # Euler: V - E + F = 1 for a triangulated disk
    used = np.unique(mesh.triangles)
    assert len(used) - len(E) + len(mesh.triangles) == 1


def _check_empty_circumcircle(mesh, tol=1e-9):
    pts = mesh.points
    for t in mesh.triangles:
        a, b, c = pts[t]
        for k in range(len(pts)):
            if k in t:
                continue
            assert in_circle(a, b, c, pts[k]) <= tol


@pytest.mark.parametrize("seed", range(3))
def test_simplicial_complex(seed):
    _check_complex(triangulate(sample_particles(60, (40, 30), seed)))


def test_simplicial_complex_with_frame():
    m = triangulate(sample_particles(60, (40, 30), 1), frame=True)
    _check_complex(m)
    n = m.n_particles
    for seg in ([n, n + 1], [n + 1, n + 2], [n + 2, n + 3], [n, n + 3]):
        assert seg in m.edges.tolist()
        assert seg in m.constrained_edges.tolist()


def test_empty_circumcircle_50_points():
    _check_empty_circumcircle(triangulate(sample_particles(50, (100, 100), 3)))


def test_frame_mesh_is_delaunay():
    _check_empty_circumcircle(triangulate(sample_particles(80, (120, 40), 2), frame=True))


def test_hull_edges_are_constrained():
    m = triangulate(sample_particles(40, (20, 20), 8))
    hull_pairs = {tuple(e) for e in m.constrained_edges.tolist()}
    assert hull_pairs <= {tuple(e) for e in m.edges.tolist()}
    assert len(hull_pairs) >= 3


def test_triangulation_deterministic():
    a = triangulate(sample_particles(500, (100, 100), 21))
    b = triangulate(sample_particles(500, (100, 100), 21))
    assert np.array_equal(a.edges, b.edges)


def test_neighbors_match_edges():
    m = triangulate(sample_particles(100, (50, 50), 0))
    for i in range(10):
        expected = {b for a, b in m.edges.tolist() if a == i} | {a for a, b in m.edges.tolist() if b == i}
        assert set(m.neighbors(i).tolist()) == expected


def test_mesh_json_export(tmp_path):
    m = triangulate(sample_particles(20, (10, 10), 0))
    path = tmp_path / "mesh.json"
    m.to_json(path)
    d = json.loads(path.read_text())
    assert set(d) == {"vertices", "edges", "triangles"}
    assert len(d["vertices"]) == 20
    assert d["edges"] == m.edges.tolist()


def test_particle_set_is_immutable():
    ps = sample_particles(10, (10, 10), 0)
    with pytest.raises(ValueError):
        ps.positions[0, 0] = 1.0
