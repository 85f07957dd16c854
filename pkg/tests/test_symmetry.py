import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multibump.bubble import Bubble
from multibump.errors import AmbiguousMembershipError, InvalidConfigError
from multibump.symmetry import (
    Cell,
    PolygonConfig,
    SymmetryGroup,
    apply_group_element,
    build_polygon,
    cell_contains,
    cell_index,
    orbit,
    reflection_average,
    symmetrize,
    symmetrize_points,
)


def test_quarter_polygon_vertices():
    pts = build_polygon(PolygonConfig(4, 1.0, 1.0, (1, 2), 5))
    np.testing.assert_allclose(pts[0], [1, 0, 0, 0, 0], atol=1e-15)
    np.testing.assert_allclose(pts[1], [0, 1, 0, 0, 0], atol=1e-15)


@given(st.integers(2, 64), st.floats(0.1, 100.0))
@settings(max_examples=40, deadline=None)
def test_polygon_sums_to_zero(k, r):
    pts = build_polygon(PolygonConfig(k, r, 1.0, (1, 2), 5))
    assert np.max(np.abs(pts.sum(axis=0))) <= 1e-12 * r * k


def test_neighbor_distances():
    pts = build_polygon(PolygonConfig(8, 2.0, 1.0, (1, 2), 5))
    for j in range(1, 9):
        d = np.linalg.norm(pts[j - 1] - pts[0])
        assert d == pytest.approx(2 * 2 * math.sin((j - 1) * math.pi / 8), abs=1e-14)


def test_inner_plane():
    pts = build_polygon(PolygonConfig(6, 1.5, 1.0, (3, 4), 7))
    assert np.all(pts[:, [0, 1, 4, 5, 6]] == 0)
    np.testing.assert_allclose(np.hypot(pts[:, 2], pts[:, 3]), 1.5)


@pytest.mark.parametrize("kw", [dict(count=0), dict(radius=0.0), dict(radius=-1.0), dict(scale=0.0),
                                dict(plane=(1, 1)), dict(dim=4)])
def test_polygon_rejects_bad_config(kw):
    base = dict(count=4, radius=1.0, scale=1.0, plane=(1, 2), dim=5)
    base.update(kw)
    with pytest.raises(InvalidConfigError):
        PolygonConfig(**base)


def test_full_rotation_is_identity(rng):
    g = SymmetryGroup.H_s(5, 5)
    y = rng.standard_normal((20, 5))
    np.testing.assert_allclose(apply_group_element(g, g.A(5), y), y)


def test_reflection_involution(rng):
    g = SymmetryGroup.H_s(4, 6)
    y = rng.standard_normal((20, 6))
    b = g.B(3)
    assert g.compose(b, b) == g.identity
    np.testing.assert_array_equal(apply_group_element(g, b, apply_group_element(g, b, y)), y)


def test_first_rotation_k6():
    g = SymmetryGroup.H_s(6, 5)
    out = apply_group_element(g, g.A(1), np.array([2.0, 0, 0, 0, 0]))
    np.testing.assert_allclose(out, [2 * math.cos(math.pi / 3), 2 * math.sin(math.pi / 3), 0, 0, 0])


def test_group_closure_and_composition(rng):
    g = SymmetryGroup.X_s(4, 3, 5)
    els = g.elements()
    assert len(els) == 4 * 3 * 2**5
    y = rng.standard_normal(5)
    sample = [els[i] for i in rng.integers(0, len(els), 30)]
    for a, b in zip(sample[::2], sample[1::2]):
        lhs = apply_group_element(g, g.compose(a, b), y)
        rhs = apply_group_element(g, a, apply_group_element(g, b, y))
        np.testing.assert_allclose(lhs, rhs, atol=1e-13)
        assert g.compose(a, g.inverse(a)) == g.identity
        assert g.compose(a, b) in set(els)


def test_group_matrices_orthogonal():
    g = SymmetryGroup.H_s(3, 5)
    for e in g.elements():
        M = g.matrix(e)
        np.testing.assert_allclose(M @ M.T, np.eye(5), atol=1e-14)


def test_B_outside_group_rejected():
    with pytest.raises(InvalidConfigError):
        SymmetryGroup.H_s(4, 5).B(1)


def test_symmetrize_fixes_invariant_field(rng):
    g = SymmetryGroup.H_s(4, 5)

    def f(y):  # invariant: radial in (y1,y2) with 4-fold and even in other coords
        r2 = y[:, 0] ** 2 + y[:, 1] ** 2
        return r2 + np.sum(y[:, 2:] ** 2, axis=1) + np.cos(4 * np.arctan2(y[:, 1], y[:, 0])) * r2**2

    y = rng.standard_normal((1000, 5))
    np.testing.assert_allclose(symmetrize(f, g)(y), f(y), rtol=1e-13, atol=1e-13)


def test_symmetrize_kills_odd_part(rng):
    g = SymmetryGroup.H_s(4, 5)
    y = rng.standard_normal((200, 5))
    assert np.max(np.abs(symmetrize(lambda p: p[:, 1], g)(y))) < 1e-14


def test_symmetrize_linear_and_idempotent(rng):
    g = SymmetryGroup.H_s(3, 5)
    f1 = lambda p: np.exp(p[:, 0]) * p[:, 2] ** 2
    f2 = lambda p: p[:, 1] ** 3 + p[:, 0]
    y = rng.standard_normal((100, 5))
    s = symmetrize(lambda p: 2 * f1(p) - 3 * f2(p), g)(y)
    np.testing.assert_allclose(s, 2 * symmetrize(f1, g)(y) - 3 * symmetrize(f2, g)(y), atol=1e-12)
    np.testing.assert_allclose(symmetrize(symmetrize(f1, g), g)(y), symmetrize(f1, g)(y), atol=1e-12)
    fs = symmetrize(f1, g)
    for e in g.generators():
        np.testing.assert_allclose(fs(apply_group_element(g, e, y)), fs(y), atol=1e-12)


def test_symmetrized_bubble_matches_direct_average():
    k, N, mu = 6, 5, 3.0
    cfg = PolygonConfig(k, 1.0, mu, (1, 2), N)
    x1 = cfg.centers()[0]
    U = Bubble(x1, mu, N)
    g = SymmetryGroup.H_s(k, N)
    direct = np.mean([U.value(apply_group_element(g, e, x1))[0] for e in g.elements()])
    assert symmetrize(U.value, g)(x1)[0] == pytest.approx(direct, rel=1e-14)
    # the two-step average is invariant for this (already reflection-even) bubble
    ra = reflection_average(U.value, k, N)(x1)[0]
    W = sum(Bubble(c, mu, N).value(x1)[0] for c in cfg.centers()) / k
    assert ra == pytest.approx(W, rel=1e-13)


def test_symmetrize_points_weights_and_closure():
    g = SymmetryGroup.H_s(4, 5)
    sp = symmetrize_points([1.0, 0.3, 0.2, 0, 0], g)
    assert sp.weights.sum() == pytest.approx(1.0)
    closed = orbit(sp.points, g)
    assert closed.shape[0] == sp.points.shape[0]
    vb = symmetrize_points([1.0, 0.3, 0.2, 0, 0], g, verbatim=True)
    assert vb.weights.sum() == pytest.approx(1.0)


def test_cells():
    cfg = PolygonConfig(8, 2.0, 1.0, (1, 2), 5)
    for j in range(1, 9):
        assert cell_contains(Cell(j, "Omega", cfg), cfg.centers()[j - 1])
        assert cell_index(cfg, cfg.centers()[j - 1]) == j
    th = math.pi / 8
    y = np.array([math.cos(th), math.sin(th), 0, 0, 0])
    assert cell_contains(Cell(1, "Omega", cfg), y)
    assert cell_contains(Cell(2, "Omega", cfg), y)
    cfg2 = PolygonConfig(2, 1.0, 1.0, (1, 2), 5)
    y = np.array([-1.0, 0.2, 0, 0, 0])
    assert not cell_contains(Cell(1, "Omega", cfg2), y)
    assert cell_contains(Cell(2, "Omega", cfg2), y)


def test_cell_axis_convention():
    cfg = PolygonConfig(4, 1.0, 1.0, (1, 2), 5)
    y = np.array([0, 0, 1.0, 0, 0])
    assert cell_contains(Cell(1, "Omega", cfg), y)
    assert not cell_contains(Cell(2, "Omega", cfg), y)
    with pytest.raises(AmbiguousMembershipError):
        cell_contains(Cell(1, "Omega", cfg), y, on_axis="raise")


def test_cell_kind_must_match_plane():
    with pytest.raises(InvalidConfigError):
        Cell(1, "D", PolygonConfig(4, 1.0, 1.0, (1, 2), 5))
