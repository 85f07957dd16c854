import numpy as np
import pytest

from multibump.bubble import Bubble, FunctionField, Kernel, Tower, closed_moments
from multibump.errors import NonDecayingFieldError
from multibump.pohozaev import (
    boundary_Q,
    dilation_all_space,
    flux_coefficients,
    green,
    green_far_field_fit,
    pohozaev_dilation,
    pohozaev_translation,
)
from multibump.potential import PotentialK
from multibump.quadrature import QuadratureSpec, integrate_sphere
from multibump.symmetry import PolygonConfig

ONE = PotentialK.constant_one()
SPEC = QuadratureSpec(rel_tol=1e-9, abs_tol=1e-12)
N = 5


@pytest.fixture(scope="module")
def U():
    return Bubble(np.zeros(N), 1.0, N)


def test_translation_terms_vanish_at_origin(U):
    rep = pohozaev_translation(U, U, ONE, np.zeros(N), 0.5, 1, SPEC)
    assert max(abs(v) for v in rep.terms.values()) < 1e-10
    assert not rep.failures


@pytest.mark.parametrize("kind", ["psi0", "psi1", "psi2"])
def test_translation_exact_pairs(U, kind):
    c = np.eye(N)[0]
    rep = pohozaev_translation(U, Kernel(U, kind), ONE, c, 0.5, 1, SPEC)
    assert rep.relative_residual < 1e-4
    assert rep.volume == 0.0


def test_exact_pair_boundary_terms_nonzero(U):
    rep = pohozaev_translation(U, Kernel(U, "psi0"), ONE, np.eye(N)[0], 0.5, 1, SPEC)
    boundary = [v for k, v in rep.terms.items() if k != "volume"]
    assert sum(abs(v) > 1e-6 for v in boundary) >= 2


def test_translation_with_xi_equal_u(U):
    # -Delta U = U^p, not p U^p: U is not a kernel element, and the boundary
    # terms miss the volume side by the factor (p - 1)/p = 2/N of the largest term
    rep = pohozaev_translation(U, U, ONE, np.eye(N)[0], 0.5, 1, SPEC)
    assert rep.relative_residual == pytest.approx(2 / N, rel=1e-6)


@pytest.mark.parametrize("delta", [0.5, 1.0])
def test_dilation_exact_pair_radius_independent(U, delta):
    rep = pohozaev_dilation(U, Kernel(U, "psi0"), ONE, np.eye(N)[0], delta, SPEC)
    assert rep.residual <= rep.error_budget + 1e-4 * rep.scale


def test_dilation_centered_ball(U):
    rep = pohozaev_dilation(U, Kernel(U, "psi0"), ONE, np.zeros(N), 1.0, SPEC)
    assert rep.volume == 0.0
    assert rep.relative_residual < 1e-4


def test_residual_linear_in_potential_curvature(U):
    c = np.eye(N)[0] * 0.8
    xi = Kernel(U, "psi0")
    spec = SPEC.with_(rel_tol=1e-7)
    r1 = pohozaev_translation(U, xi, PotentialK("quadratic-bump", r0=1.0, c0=1.0), c, 0.5, 1, spec)
    r2 = pohozaev_translation(U, xi, PotentialK("quadratic-bump", r0=1.0, c0=0.1), c, 0.5, 1, spec)
    assert r1.residual > 1e-6
    assert r1.residual / r2.residual == pytest.approx(10.0, rel=0.05)


def test_boundary_Q_parity(U):
    q = boundary_Q(U, U, np.zeros(N), 0.7, SPEC)
    assert abs(q.value) < 1e-10


def test_all_space_dilation_converges(U):
    K = PotentialK("quadratic-bump", r0=1.0, c0=1.0)
    res = dilation_all_space(U, Kernel(U, "psi0"), K, 2.0, QuadratureSpec(rel_tol=1e-8, abs_tol=1e-12))
    assert abs(res.extrapolated - res.values[-1]) <= max(res.error_estimate, 1e-8)


def test_all_space_dilation_rejects_growing_field(U):
    r = np.linspace(0.0, 200.0, 2001)
    K = PotentialK("user-table", table=(r, 1.0 + 0.01 * r * r))
    grow = FunctionField(lambda y: 1.0 + np.sum(y * y, axis=1), N)
    with pytest.raises(NonDecayingFieldError):
        dilation_all_space(U, grow, K, 4.0, QuadratureSpec(rel_tol=1e-6, abs_tol=1e-10))


def test_flux_coefficients_limits():
    mu = 50.0
    x = np.eye(N)[0]
    b = Bubble(x, mu, N)
    m = closed_moments(N)
    spec = QuadratureSpec(rel_tol=1e-8, abs_tol=1e-12)
    xi = FunctionField(lambda y: mu * b.d_scale(y), N)
    fc = flux_coefficients(b, xi, ONE, x, 1.0, spec, scale=mu)
    assert fc.A_flux / m.A_mass == pytest.approx(1.0, abs=0.01)
    assert fc.B_flux_local / m.B_flux == pytest.approx(1.0, abs=0.01)
    odd = flux_coefficients(b, Kernel(b, "psi2"), ONE, x, 1.0, spec, scale=mu)
    assert abs(odd.B_flux_local) < 1e-6 * abs(m.B_flux) * mu


def test_green_normalization():
    # flux of grad G through any sphere around the pole is -1
    x = np.zeros(N)
    f = lambda y: -(N - 2) * green(y, x, N) * np.linalg.norm(y, axis=1) ** -1
    r = integrate_sphere(f, x, 1.3, QuadratureSpec(rel_tol=1e-12, abs_tol=1e-14))
    assert r.value == pytest.approx(-1.0, rel=1e-12)


def test_green_far_field_coefficient():
    mu = 100.0
    cfg = PolygonConfig(4, 1.0, mu, (1, 2), N)
    t = Tower.from_polygon(cfg)
    fit = green_far_field_fit(t, cfg.centers(), 0.4)
    expected = closed_moments(N).A_mass / mu ** ((N - 2) / 2)
    assert fit.coefficient == pytest.approx(expected, rel=0.05)
    assert fit.relative_rms < 0.05
