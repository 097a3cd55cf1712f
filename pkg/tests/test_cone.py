"""Tests for the polytopic inner approximation of the thrust cone."""

import numpy as np

from cztube.cone import CompactQuadraticCone, cqc_inner_approx, spread_points


def test_spread_points_1d():
    pts = spread_points(1, 2)
    assert sorted(p[0] for p in pts) == [-1.0, 1.0]
    assert spread_points(1, 1).shape == (1, 1)


def test_spread_points_2d_four_axes():
    pts = spread_points(2, 4)
    # uniform angles: the four points form two orthogonal antipodal pairs
    assert pts.shape == (4, 2)
    dots = np.abs(pts @ pts.T)
    for i in range(4):
        row = sorted(dots[i])
        assert abs(row[-1] - 1.0) <= 1e-12  # itself
        assert abs(row[-2] - 1.0) <= 1e-12  # its antipode
        assert row[0] <= 1e-12  # orthogonal pair


def test_spread_points_unit_norm():
    for d, k in [(1, 2), (2, 7), (3, 14), (3, 302)]:
        pts = spread_points(d, k)
        assert pts.shape == (k, d)
        assert np.all(np.abs(np.linalg.norm(pts, axis=1) - 1.0) <= 1e-12)


def test_spread_points_3d_minimum_angle():
    pts = spread_points(3, 14)
    worst = np.pi
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            ang = np.arccos(np.clip(pts[i] @ pts[j], -1.0, 1.0))
            worst = min(worst, ang)
    assert np.degrees(worst) >= 30.0


def test_spread_points_deterministic():
    assert np.array_equal(spread_points(3, 50), spread_points(3, 50))


def test_cone_support_closed_form():
    cone = CompactQuadraticCone(3, 2.0)
    # along the axis: apex at t = t_max
    assert abs(cone.support(np.array([0.0, 0.0, 1.0])) - 2.0) <= 1e-12
    # along -t: the origin
    assert abs(cone.support(np.array([0.0, 0.0, -1.0])) - 0.0) <= 1e-12
    # boundary ray direction
    eta = np.array([1.0, 0.0, 1.0])
    assert abs(cone.support(eta) - 2.0 * 2.0) <= 1e-12


def test_pyramid_apex_support():
    cone = CompactQuadraticCone(3, 1.0)
    verts, cz = cqc_inner_approx(cone, 4)
    assert abs(cz.support(np.array([0.0, 0.0, 1.0])) - 1.0) <= 1e-9
    assert len(verts) == 5  # ring + origin


def test_vertices_on_cone_boundary():
    cone = CompactQuadraticCone(4, 4.4094488188976375)
    verts, _ = cqc_inner_approx(cone, 302)
    assert len(verts) == 303
    for v in verts:
        if np.allclose(v, 0.0):
            continue
        assert abs(np.linalg.norm(v[:-1]) - v[-1]) <= 1e-9
        assert abs(v[-1] - cone.t_max) <= 1e-9


def test_inner_approximation_sound():
    rng = np.random.default_rng(0)
    for dim, k in [(3, 8), (4, 14), (4, 40)]:
        cone = CompactQuadraticCone(dim, 3.0)
        _, cz = cqc_inner_approx(cone, k)
        for _ in range(100):
            eta = rng.normal(size=dim)
            assert cz.support(eta) <= cone.support(eta) + 1e-9


def test_refinement_reduces_support_gap():
    # doubling the lattice is not nested, so individual directions may
    # regress slightly; the aggregate gap must shrink and a clear
    # majority of directions must improve
    rng = np.random.default_rng(1)
    cone = CompactQuadraticCone(4, 2.0)
    _, coarse = cqc_inner_approx(cone, 20)
    _, fine = cqc_inner_approx(cone, 40)
    gaps_c, gaps_f, improved = [], [], 0
    total = 40
    for _ in range(total):
        eta = rng.normal(size=4)
        gaps_c.append(cone.support(eta) - coarse.support(eta))
        gaps_f.append(cone.support(eta) - fine.support(eta))
        if gaps_f[-1] <= gaps_c[-1] + 1e-9:
            improved += 1
    assert np.mean(gaps_f) < np.mean(gaps_c)
    assert max(gaps_f) < max(gaps_c)
    assert improved >= 0.75 * total
