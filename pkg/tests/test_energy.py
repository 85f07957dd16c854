import math

import numpy as np
import pytest

from multibump.bubble import Bubble, Tower, c_N, closed_moments
from multibump.energy import (
    ExpansionConstants,
    balance_closed_form,
    balance_sides,
    energy,
    expansion_energy,
    find_critical_point,
    fit_expansion_constants,
    fit_power,
    interaction,
    lambda_star,
    neighbor_sum,
    reduced_window,
    solve_balance,
)
from multibump.errors import (
    BoundaryHitError,
    DegenerateConfigurationError,
    FitError,
    InvalidConfigError,
    NoBalanceError,
)
from multibump.potential import PotentialK
from multibump.quadrature import QuadratureSpec

ONE = PotentialK.constant_one()
CYL = QuadratureSpec(rel_tol=1e-8, abs_tol=1e-10, mode="cylinder-3d")


def _pair(N, mu, d):
    e = np.zeros(N)
    e[0] = d / 2
    return Bubble(-e, mu, N), Bubble(e, mu, N)


@pytest.mark.parametrize("N", [5, 7])
def test_single_bubble_energy(N):
    from multibump.symmetry import SymmetryGroup

    U = Tower([Bubble(np.zeros(N), 1.0, N)])
    g = SymmetryGroup(((1, (1, 2)),), frozenset({2}), N)
    r = energy(U, ONE, CYL, split=False, symmetry=g)
    assert r.value == pytest.approx(closed_moments(N).S_mass / N, rel=1e-6)


def test_energy_translation_scale_invariant():
    from multibump.symmetry import SymmetryGroup

    N = 5
    g = SymmetryGroup(((1, (1, 2)),), frozenset({2}), N)
    vals = []
    for x, mu in [((0.0, 0, 0, 0, 0), 1.0), ((1.5, 0, 0, 0, 0), 3.7)]:
        vals.append(energy(Tower([Bubble(np.array(x), mu, N)]), ONE, CYL, split=False, symmetry=g))
    assert abs(vals[0].value - vals[1].value) <= vals[0].error_estimate + vals[1].error_estimate + 1e-7


def test_two_bubble_deficit():
    N, mu, d = 5, 1.0, 30.0
    b1, b2 = _pair(N, mu, d)
    from multibump.symmetry import SymmetryGroup

    g = SymmetryGroup(((1, (1, 2)),), frozenset({2}), N)
    r = energy(Tower([b1, b2]), ONE, CYL, symmetry=g, plane=(1, 2))
    m = closed_moments(N)
    deficit = 2 * m.S_mass / N - r.value
    # interaction energy is -int U1^{2*-1} U2 to leading order
    assert deficit == pytest.approx(m.A_mass * c_N(N) * (mu * d) ** (2 - N), rel=0.05)


def test_split_and_direct_energy_agree():
    N = 5
    from multibump.symmetry import SymmetryGroup

    g = SymmetryGroup(((1, (1, 2)),), frozenset({2}), N)
    b1, b2 = _pair(N, 1.0, 3.0)
    t = Tower([b1, b2])
    a = energy(t, ONE, CYL, symmetry=g, plane=(1, 2))
    b = energy(t, ONE, CYL, split=False, symmetry=g, plane=(1, 2))
    assert a.value == pytest.approx(b.value, rel=1e-6)


def test_interaction_symmetric_and_monotone():
    N = 5
    spec = QuadratureSpec(rel_tol=1e-8, abs_tol=1e-12)
    b1, b2 = _pair(N, 2.0, 3.0)
    a = interaction(b1, b2, spec)
    b = interaction(b2, b1, spec)
    assert a.value == pytest.approx(b.value, rel=1e-8)
    vals = [interaction(*_pair(N, 2.0, d), spec).value for d in (2.0, 4.0, 8.0)]
    assert vals[0] > vals[1] > vals[2] > 0


def test_interaction_coincident():
    b = Bubble(np.zeros(5), 1.0, 5)
    with pytest.raises(DegenerateConfigurationError):
        interaction(b, Bubble(np.zeros(5), 2.0, 5), QuadratureSpec())


def test_expansion_at_r0_and_lambda_star():
    c = ExpansionConstants(A=2.0, B1=1.5, B2=3.0, B3=0.7, r0=1.0, dim=7)
    n = 8
    ls = lambda_star(c, n)
    assert ls == pytest.approx((5 * 0.7 / 3.0) ** (1 / 3) * 8 ** (5 / 3), rel=1e-14)
    h = 1e-5 * ls
    d = (expansion_energy(1.0, ls + h, n, c) - expansion_energy(1.0, ls - h, n, c)) / (2 * h)
    assert abs(d) < 1e-9
    lam = 3.0
    base = n * c.A + n * (c.B1 / lam**2 - c.B3 * n**5 / lam**5)
    assert expansion_energy(1.0, lam, n, c) == pytest.approx(base, rel=1e-15)
    printed = expansion_energy(1.0, lam, n, c, reading="printed")
    assert printed != pytest.approx(base)


def test_expansion_rejects_bad_constants():
    with pytest.raises(InvalidConfigError):
        ExpansionConstants(A=1, B1=-1, B2=1, B3=1)


def test_fit_recovers_synthetic_constants():
    c = ExpansionConstants(A=2.0, B1=1.5, B2=3.0, B3=0.7, r0=1.0, dim=7)
    samples = []
    for n in (8, 12, 16):
        (t0, t1), (l0, l1) = reduced_window(n, 7)
        for t in np.linspace(t0, t1, 3):
            for lam in np.geomspace(l0, l1, 4):
                samples.append((t, lam, n, expansion_energy(t, lam, n, c)))
    fit = fit_expansion_constants(samples, dim=7)
    got = fit.constants
    for key in ("A", "B1", "B2", "B3"):
        assert getattr(got, key) == pytest.approx(getattr(c, key), rel=1e-8)


def test_fit_rank_deficient():
    with pytest.raises(FitError):
        fit_expansion_constants([(1.0, 2.0, 8, 1.0)] * 8, dim=7)


def test_critical_point_of_expansion():
    c = ExpansionConstants(A=1.0, B1=1.0, B2=1.0, B3=1.0, r0=1.0, dim=7)
    n = 8
    cp = find_critical_point(lambda t, lam: expansion_energy(t, lam, n, c), reduced_window(n, 7))
    assert abs(cp.t - 1.0) <= 1e-8
    assert cp.lam == pytest.approx(lambda_star(c, n), rel=1e-8)
    assert cp.classification == "saddle"


def test_critical_point_quadratic_minimum():
    cp = find_critical_point(lambda t, lam: (t - 1.0) ** 2 + (lam - 5.0) ** 2, ((0.5, 1.5), (1.0, 20.0)))
    assert cp.t == pytest.approx(1.0, abs=1e-8)
    assert cp.lam == pytest.approx(5.0, rel=1e-8)
    assert cp.classification == "minimum"


def test_critical_point_outside_window():
    c = ExpansionConstants(A=1.0, B1=1.0, B2=1.0, B3=1.0, r0=1.0, dim=7)
    ls = lambda_star(c, 8)
    with pytest.raises(BoundaryHitError):
        find_critical_point(lambda t, lam: expansion_energy(t, lam, 8, c), ((0.9, 1.1), (2 * ls, 5 * ls)))


def test_neighbor_sum_matches_geometry():
    from multibump.symmetry import PolygonConfig

    k, r, N = 8, 3.0, 7
    pts = PolygonConfig(k, r, 1.0, (1, 2), N).centers()
    direct = sum(np.linalg.norm(p - pts[0]) ** (2 - N) for p in pts[1:])
    assert neighbor_sum(k, r, N) == pytest.approx(direct, rel=1e-13)


def test_balance_solution():
    K = PotentialK("quadratic-bump", r0=1.0, c0=1.0)
    s = solve_balance(8, K, dim=7)
    left, right = balance_sides(s.mu_bar, 8, K, 7)
    assert left == pytest.approx(right, rel=1e-12)
    assert s.mu == pytest.approx(8 * s.mu_bar)
    # nearest-neighbor truncation only adds positive terms back: full sum raises mu_bar
    assert s.mu_bar > balance_closed_form(8, K, 7)


def test_balance_large_k_scaling():
    K = PotentialK("quadratic-bump", r0=1.0, c0=1.0)
    ks = [128, 256, 512]
    slope, _, r2 = fit_power(ks, [solve_balance(k, K, dim=7).mu_bar for k in ks])
    assert slope == pytest.approx(2 / 3, rel=5e-3)


def test_no_balance_for_flat_potential():
    with pytest.raises(NoBalanceError):
        solve_balance(8, ONE, dim=7)
