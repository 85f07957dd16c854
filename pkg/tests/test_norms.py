import numpy as np
import pytest

from multibump.bubble import Bubble
from multibump.errors import InvalidConfigError
from multibump.norms import (
    WeightSpec,
    start_points,
    tau_inner,
    tau_outer,
    weight_value,
    weighted_sup_norm,
)


def test_weight_at_single_center():
    N, mu = 5, 3.0
    spec = WeightSpec(np.ones(N), mu, 0.5, "star", N)
    assert weight_value(spec, np.ones(N))[0] == pytest.approx(mu ** ((N - 2) / 2))
    ds = WeightSpec(np.ones(N), mu, 0.5, "double-star", N)
    assert weight_value(ds, np.ones(N))[0] == pytest.approx(mu ** ((N + 2) / 2))


def test_weight_decay_exponent():
    N, mu, tau = 7, 2.0, tau_inner(7)
    spec = WeightSpec(np.zeros(N), mu, tau, "star", N)
    y = np.zeros(N)
    y[0] = 10.0
    expected = mu ** 2.5 * (1 + mu * 10) ** (-(2.5 + tau))
    assert weight_value(spec, y)[0] == pytest.approx(expected, rel=1e-14)


def test_tau_values():
    assert tau_inner(7) == pytest.approx(0.6)
    assert tau_outer(7) == pytest.approx(0.61)


@pytest.mark.parametrize("kw", [dict(tau=0.0), dict(tau=1.5), dict(scale=0.0), dict(kind="triple")])
def test_invalid_weight(kw):
    base = dict(centers=np.zeros(5), scale=1.0, tau=0.5, kind="star", dim=5)
    base.update(kw)
    with pytest.raises(InvalidConfigError):
        WeightSpec(**base)


def _two_center_spec():
    cs = np.array([[1.0, 0, 0, 0, 0], [-1.0, 0, 0, 0, 0]])
    return WeightSpec(cs, 4.0, 0.5, "star", 5)


def test_norm_of_weight_is_one():
    spec = _two_center_spec()
    est = weighted_sup_norm(lambda y: weight_value(spec, y), spec, 16)
    assert est.value == pytest.approx(1.0, rel=1e-12)
    assert est.converged


def test_norm_homogeneity():
    spec = _two_center_spec()
    f = lambda y: Bubble(spec.centers[0], 4.0, 5).value(y)
    a = weighted_sup_norm(f, spec, 32)
    b = weighted_sup_norm(lambda y: -2.5 * f(y), spec, 32)
    assert b.value == pytest.approx(2.5 * a.value, rel=1e-9)


def test_norm_is_lower_bound_and_monotone(rng):
    spec = _two_center_spec()
    f = lambda y: Bubble(spec.centers[0], 4.0, 5).value(y) * (1 + np.sin(3 * y[:, 1]))
    est = weighted_sup_norm(f, spec, 32, seed=1)
    y = spec.centers[0] + rng.standard_normal((5000, 5)) * 0.5
    sampled = np.max(np.abs(f(y)) / weight_value(spec, y))
    assert est.value >= sampled * (1 - 1e-9)
    vals = [v for _, v in est.history]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_start_prefix_independent_of_budget():
    spec = _two_center_spec()
    a = start_points(spec, 40, seed=7)
    b = start_points(spec, 400, seed=7)
    np.testing.assert_array_equal(a, b[:40])


def test_norm_is_deterministic():
    spec = _two_center_spec()
    f = lambda y: Bubble(spec.centers[1], 3.0, 5).value(y)
    a = weighted_sup_norm(f, spec, 24, seed=2)
    b = weighted_sup_norm(f, spec, 24, seed=2, workers=3)
    assert a.value == b.value
    np.testing.assert_array_equal(a.argmax, b.argmax)
