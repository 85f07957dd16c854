import math

import mpmath as mp
import numpy as np
import pytest

from multibump.bubble import (
    Bubble,
    Kernel,
    MomentTable,
    Tower,
    c_N,
    closed_moments,
    closed_moments_mp,
    critical_exponent,
    eval_bubble,
    eval_kernel,
    eval_tower,
    radial_moment,
    sphere_area,
)
from multibump.errors import DivergenceError, InvalidConfigError, MissingContextError
from multibump.symmetry import PolygonConfig


def _fd_grad(f, y, h=1e-6):
    g = np.zeros_like(y)
    for i in range(y.size):
        e = np.zeros_like(y)
        e[i] = h
        g[i] = (f(y + e)[0] - f(y - e)[0]) / (2 * h)
    return g


def test_center_value_n5():
    b = Bubble(np.zeros(5), 1.0, 5)
    assert eval_bubble(b, np.zeros(5))[0] == pytest.approx(15 ** 0.75, rel=1e-15)


@pytest.mark.parametrize("N", [5, 6, 7, 10])
def test_psi0_at_center(N):
    b = Bubble(np.zeros(N), 1.0, N)
    assert eval_kernel(b, "psi0", np.zeros(N))[0] == pytest.approx((N - 2) / 2 * c_N(N), rel=1e-14)


@pytest.mark.parametrize("N", [5, 7])
def test_solves_critical_equation(N, rng):
    b = Bubble(rng.standard_normal(N), 2.5, N)
    y = b.center + rng.standard_normal((1000, N)) * rng.uniform(0.01, 3, (1000, 1))
    u = b.value(y)
    np.testing.assert_allclose(-b.laplacian(y), u ** (critical_exponent(N) - 1), rtol=1e-12)


@pytest.mark.parametrize("kind", ["psi0", "psi1", "psi3"])
def test_derivatives_against_finite_differences(kind, rng):
    N = 6
    b = Bubble(rng.standard_normal(N), 1.7, N)
    y = b.center + 0.4 * rng.standard_normal(N)
    np.testing.assert_allclose(b.grad(y)[0], _fd_grad(b.value, y), rtol=1e-7)
    kern = Kernel(b, kind)
    np.testing.assert_allclose(kern.grad(y)[0], _fd_grad(kern.value, y), rtol=1e-6, atol=1e-8)
    lap = np.trace(np.array([_fd_grad(lambda p, i=i: kern.grad(p)[:, i], y) for i in range(N)]))
    assert kern.laplacian(y)[0] == pytest.approx(lap, rel=1e-5)


def test_psi0_is_scale_derivative(rng):
    N, mu, h = 7, 1.3, 1e-6
    x = rng.standard_normal(N)
    y = x + rng.standard_normal((5, N))
    fd = (Bubble(x, mu + h, N).value(y) - Bubble(x, mu - h, N).value(y)) / (2 * h)
    np.testing.assert_allclose(Kernel(Bubble(x, mu, N), "psi0").value(y), fd, rtol=1e-8)


def test_Z1_needs_parent():
    with pytest.raises(MissingContextError):
        Kernel(Bubble(np.zeros(5), 1.0, 5), "Z1")
    cfg = PolygonConfig(4, 2.0, 3.0, (1, 2), 5)
    b = Tower.from_polygon(cfg).bubbles[1]
    y = np.array([0.1, 2.2, 0.3, 0, 0])
    h = 1e-6
    moved = lambda s: Bubble(b.center + s * cfg.unit(2), 3.0, 5).value(y)[0]
    assert Kernel(b, "Z1").value(y)[0] == pytest.approx((moved(h) - moved(-h)) / (2 * h), rel=1e-7)


def test_invalid_kernel_and_bubble():
    with pytest.raises(InvalidConfigError):
        Kernel(Bubble(np.zeros(5), 1.0, 5), "psi6")
    with pytest.raises(InvalidConfigError):
        Bubble(np.zeros(5), 0.0, 5)
    with pytest.raises(InvalidConfigError):
        Bubble(np.zeros(4), 1.0, 5)


def test_tower_is_sum(rng):
    cfg = PolygonConfig(5, 1.0, 4.0, (1, 2), 5)
    t = Tower.from_polygon(cfg)
    y = rng.standard_normal((10, 5))
    np.testing.assert_allclose(eval_tower(t, y), sum(b.value(y) for b in t.bubbles), rtol=1e-15)
    one = Tower([t.bubbles[0]])
    np.testing.assert_array_equal(one.value(y), t.bubbles[0].value(y))


def test_tower_rejects_mixed_dims():
    with pytest.raises(InvalidConfigError):
        Tower([Bubble(np.zeros(5), 1.0, 5), Bubble(np.zeros(6), 1.0, 6)])


def test_A_mass_n5_closed_value():
    assert closed_moments(5).A_mass == pytest.approx(3 * 8 * math.pi**2 / 3 * 15 ** 0.75, rel=1e-14)


@pytest.mark.parametrize("N", [5, 6, 7, 8, 9, 10])
def test_moment_identities(N):
    m = closed_moments(N)
    assert m.A_mass == pytest.approx((N - 2) * sphere_area(N - 1) * c_N(N), rel=1e-12)
    assert m.B_flux / m.A_mass == pytest.approx(-(N - 2) / 2, rel=1e-12)
    assert m.psi0_moment == pytest.approx(-2 / m.two_star * m.M2, rel=1e-12)
    assert m.energy == pytest.approx(m.S_mass / N, rel=1e-15)


@pytest.mark.parametrize("N,a,b", [(5, 5, 0), (5, 3.5, 0), (7, 7, 2), (6, 4, 1.5)])
def test_radial_moment_against_1d_quadrature(N, a, b):
    with mp.workdps(30):
        om = 2 * mp.pi ** (mp.mpf(N) / 2) / mp.gamma(mp.mpf(N) / 2)
        ref = om * mp.quad(lambda r: (1 + r * r) ** (-a) * r ** (b + N - 1), [0, 1, mp.inf])
    assert radial_moment(N, a, b) == pytest.approx(float(ref), rel=1e-12)
    with mp.workdps(30):
        refR = om * mp.quad(lambda r: (1 + r * r) ** (-a) * r ** (b + N - 1), [0, 1, 3])
    assert radial_moment(N, a, b, R=3.0) == pytest.approx(float(refR), rel=1e-11)


def test_divergent_moment():
    with pytest.raises(DivergenceError):
        radial_moment(5, 2.5, 0)


def test_table_matches_high_precision():
    for N in (5, 7, 9):
        gold = closed_moments_mp(N)
        m = closed_moments(N)
        for key in ("A_mass", "S_mass", "M2", "B_flux", "psi0_moment"):
            assert getattr(m, key) == pytest.approx(float(gold[key]), rel=1e-12)


def test_table_json_roundtrip():
    m = closed_moments(7)
    assert MomentTable.from_json(m.to_json()) == m
