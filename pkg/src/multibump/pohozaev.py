"""Local Pohozaev identities on balls, flux coefficients and far-field checks.

For u solving -Lap u = K u^{2*-1} and xi solving the linearised equation
-Lap xi = (2*-1) K u^{2*-2} xi, on a ball Omega with outer normal nu:

translation (direction i)
    - int_dO du/dnu d_i xi - int_dO dxi/dnu d_i u + int_dO <grad u, grad xi> nu_i
    - int_dO K u^{2*-1} xi nu_i  =  - int_O u^{2*-1} xi d_i K

dilation (about x0)
    int_O u^{2*-1} xi <grad K, y - x0>
      = int_dO K u^{2*-1} xi <nu, y-x0> + int_dO du/dnu <grad xi, y-x0>
        + int_dO dxi/dnu <grad u, y-x0> - int_dO <grad u, grad xi> <nu, y-x0>
        + (N-2)/2 (int_dO xi du/dnu + int_dO u dxi/dnu)

Each term is integrated separately and reported with its error estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bubble import critical_exponent, sphere_area
from .errors import ConvergenceError, NonDecayingFieldError
from .potential import K_of_y, PotentialK, grad_K
from .quadrature import IntegralResult, QuadratureSpec, integrate_ball, integrate_sphere


def _pow(u, p):
    """Odd extension |u|^{p-1} u."""
    return np.abs(u) ** (p - 1) * u


@dataclass
class PohozaevReport:
    identity: str
    terms: dict
    errors: dict
    volume: float
    lhs: float
    rhs: float
    residual: float
    scale: float
    relative_residual: float
    error_budget: float
    failures: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "identity": self.identity,
            "terms": dict(sorted(self.terms.items())),
            "errors": dict(sorted(self.errors.items())),
            "volume": self.volume,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "scale": self.scale,
            "relative_residual": self.relative_residual,
            "error_budget": self.error_budget,
            "failures": self.failures,
        }


def _is_constant(K: PotentialK) -> bool:
    return K.form == "constant-one"


def _surface_terms(integrands: dict, center, radius, spec, axis):
    vals, errs, fails = {}, {}, {}
    for name, f in integrands.items():
        try:
            r = integrate_sphere(f, center, radius, spec, axis=axis)
        except ConvergenceError as exc:
            r = exc.result
            fails[name] = str(exc)
            if r is None:
                vals[name], errs[name] = float("nan"), float("inf")
                continue
        vals[name], errs[name] = r.value, r.error_estimate
    return vals, errs, fails


def _volume_term(f, K, center, radius, spec, axis, features):
    if _is_constant(K):
        return IntegralResult(0.0, 0.0, 0, 0.0), None
    try:
        return integrate_ball(f, center, radius, spec, axis=axis, features=features), None
    except ConvergenceError as exc:
        return exc.result or IntegralResult(float("nan"), float("inf"), 0, 0.0), str(exc)


def _features(*fields):
    out = []
    for f in fields:
        if hasattr(f, "features"):
            out += f.features()
        elif hasattr(f, "bubble"):
            out.append((f.bubble.center, 1.0 / f.bubble.scale))
        elif hasattr(f, "center") and hasattr(f, "scale"):
            out.append((f.center, 1.0 / f.scale))
    return out


def boundary_Q(u, xi, center, delta, spec: QuadratureSpec, axis: int = 1) -> IntegralResult:
    """Q(u, xi, delta): the three gradient boundary terms of the translation identity."""
    center = np.asarray(center, dtype=float)
    i = axis - 1

    def q(y):
        nu = (y - center) / delta
        gu, gx = u.grad(y), xi.grad(y)
        dun = np.einsum("ij,ij->i", gu, nu)
        dxn = np.einsum("ij,ij->i", gx, nu)
        return -dun * gx[:, i] - dxn * gu[:, i] + np.einsum("ij,ij->i", gu, gx) * nu[:, i]

    return integrate_sphere(q, center, delta, spec)


def pohozaev_translation(u, xi, K: PotentialK, center: Sequence[float], delta: float, axis: int,
                         spec: QuadratureSpec) -> PohozaevReport:
    center = np.asarray(center, dtype=float)
    N = center.size
    p = critical_exponent(N) - 1
    i = axis - 1
    align = np.eye(N)[i]

    def nu_of(y):
        return (y - center) / delta

    integrands = {
        "dnu_u_di_xi": lambda y: np.einsum("ij,ij->i", u.grad(y), nu_of(y)) * xi.grad(y)[:, i],
        "dnu_xi_di_u": lambda y: np.einsum("ij,ij->i", xi.grad(y), nu_of(y)) * u.grad(y)[:, i],
        "grad_dot_nu_i": lambda y: np.einsum("ij,ij->i", u.grad(y), xi.grad(y)) * nu_of(y)[:, i],
        "K_u_xi_nu_i": lambda y: K_of_y(K, y) * _pow(u.value(y), p) * xi.value(y) * nu_of(y)[:, i],
    }
    vals, errs, fails = _surface_terms(integrands, center, delta, spec, align)
    vol, vfail = _volume_term(lambda y: _pow(u.value(y), p) * xi.value(y) * grad_K(K, y)[:, i],
                              K, center, delta, spec, align, _features(u, xi))
    if vfail:
        fails["volume"] = vfail
    vals["volume"], errs["volume"] = vol.value, vol.error_estimate
    lhs = -vals["dnu_u_di_xi"] - vals["dnu_xi_di_u"] + vals["grad_dot_nu_i"] - vals["K_u_xi_nu_i"]
    rhs = -vol.value
    return _report("translation", vals, errs, lhs, rhs, fails, spec.abs_tol)


def pohozaev_dilation(u, xi, K: PotentialK, center: Sequence[float], delta: float,
                      spec: QuadratureSpec, x0: Optional[Sequence[float]] = None) -> PohozaevReport:
    """Dilation identity on the ball B_delta(center) about x0 (default: center)."""
    center = np.asarray(center, dtype=float)
    N = center.size
    p = critical_exponent(N) - 1
    x0 = center if x0 is None else np.asarray(x0, dtype=float)
    align = None if np.allclose(x0, center) else (center - x0)

    def nu_of(y):
        return (y - center) / delta

    def dot(a, b):
        return np.einsum("ij,ij->i", a, b)

    integrands = {
        "K_u_xi_nu_x": lambda y: K_of_y(K, y) * _pow(u.value(y), p) * xi.value(y) * dot(nu_of(y), y - x0),
        "dnu_u_grad_xi_x": lambda y: dot(u.grad(y), nu_of(y)) * dot(xi.grad(y), y - x0),
        "dnu_xi_grad_u_x": lambda y: dot(xi.grad(y), nu_of(y)) * dot(u.grad(y), y - x0),
        "grad_dot_nu_x": lambda y: dot(u.grad(y), xi.grad(y)) * dot(nu_of(y), y - x0),
        "xi_dnu_u": lambda y: xi.value(y) * dot(u.grad(y), nu_of(y)),
        "u_dnu_xi": lambda y: u.value(y) * dot(xi.grad(y), nu_of(y)),
    }
    vals, errs, fails = _surface_terms(integrands, center, delta, spec, align)
    vol, vfail = _volume_term(lambda y: _pow(u.value(y), p) * xi.value(y) * dot(grad_K(K, y), y - x0),
                              K, center, delta, spec, align, _features(u, xi))
    if vfail:
        fails["volume"] = vfail
    vals["volume"], errs["volume"] = vol.value, vol.error_estimate
    lhs = vol.value
    rhs = (vals["K_u_xi_nu_x"] + vals["dnu_u_grad_xi_x"] + vals["dnu_xi_grad_u_x"] - vals["grad_dot_nu_x"]
           + 0.5 * (N - 2) * (vals["xi_dnu_u"] + vals["u_dnu_xi"]))
    return _report("dilation", vals, errs, lhs, rhs, fails, spec.abs_tol)


def _report(tag, vals, errs, lhs, rhs, fails, floor) -> PohozaevReport:
    scale = max(abs(v) for v in vals.values() if np.isfinite(v)) if vals else 0.0
    residual = abs(lhs - rhs)
    budget = float(sum(errs.values()))
    # terms at rounding level (odd integrands) are measured against abs_tol
    rel = residual / max(scale, floor)
    return PohozaevReport(tag, vals, errs, vals["volume"], lhs, rhs, residual, scale, rel, budget, fails)


@dataclass(frozen=True)
class AllSpaceDilation:
    values: tuple[float, ...]
    radii: tuple[float, ...]
    extrapolated: float
    order: Optional[float]
    error_estimate: float

    def to_dict(self) -> dict:
        return {"values": list(self.values), "radii": list(self.radii), "extrapolated": self.extrapolated,
                "order": self.order, "error_estimate": self.error_estimate}


def dilation_all_space(u, xi, K: PotentialK, R: float, spec: QuadratureSpec,
                       center: Optional[Sequence[float]] = None) -> AllSpaceDilation:
    """int_{R^N} u^{2*-1} xi <grad K(y), y> from balls of radius R, 2R, 4R.

    The tail is assumed to decay like R^{-q}; q is read off the three values
    and the limit extrapolated (Richardson).  Differences that do not shrink
    signal a field without the required decay.
    """
    N = u.dim if hasattr(u, "dim") else u.bubble.dim
    p = critical_exponent(N) - 1
    c = np.zeros(N) if center is None else np.asarray(center, dtype=float)

    def f(y):
        return _pow(u.value(y), p) * xi.value(y) * np.einsum("ij,ij->i", grad_K(K, y), y)

    radii = (R, 2 * R, 4 * R)
    res = [integrate_ball(f, c, r, spec, features=_features(u, xi)) for r in radii]
    v = [r.value for r in res]
    err = sum(r.error_estimate for r in res)
    d1, d2 = v[1] - v[0], v[2] - v[1]
    if abs(d2) <= err or abs(d1) <= err:
        return AllSpaceDilation(tuple(v), radii, v[2], None, err + abs(d2))
    ratio = d1 / d2
    if ratio <= 1.0:
        raise NonDecayingFieldError(f"ball integrals do not settle (successive differences {d1:.3e}, {d2:.3e})")
    q = math.log2(ratio)
    extrap = v[2] + d2 / (ratio - 1.0)
    return AllSpaceDilation(tuple(v), radii, extrap, q, err + abs(d2 / (ratio - 1.0)))


@dataclass(frozen=True)
class FluxCoefficients:
    A_flux: float
    B_flux_local: float
    delta: float
    center_index: Optional[int]
    errors: tuple[float, float]

    def to_dict(self) -> dict:
        return {"A_flux": self.A_flux, "B_flux_local": self.B_flux_local, "delta": self.delta,
                "center_index": self.center_index, "errors": list(self.errors)}


def flux_coefficients(u, xi, K: PotentialK, center: Sequence[float], delta: float, spec: QuadratureSpec,
                      scale: float = 1.0, center_index: Optional[int] = None) -> FluxCoefficients:
    """A = mu^{(N-2)/2} int_B K u^{2*-1},  B = mu^{(N-2)/2} (2*-1) int_B K u^{2*-2} xi.

    The factor mu^{(N-2)/2} (``scale`` = mu) makes both coefficients
    scale-free, so that for a bubble they tend to the whole-space moments.
    """
    center = np.asarray(center, dtype=float)
    N = center.size
    ts = critical_exponent(N)
    norm = scale ** ((N - 2) / 2)
    feats = _features(u, xi)
    a = integrate_ball(lambda y: K_of_y(K, y) * _pow(u.value(y), ts - 1), center, delta, spec, features=feats)
    b = integrate_ball(lambda y: K_of_y(K, y) * np.abs(u.value(y)) ** (ts - 2) * xi.value(y),
                       center, delta, spec, features=feats)
    return FluxCoefficients(norm * a.value, norm * (ts - 1) * b.value, delta, center_index,
                            (norm * a.error_estimate, norm * (ts - 1) * b.error_estimate))


def green(y, x, N: int) -> np.ndarray:
    """G(y, x) = |y - x|^{-(N-2)} / ((N-2) |S^{N-1}|)."""
    y = np.atleast_2d(y)
    return np.linalg.norm(y - np.asarray(x, dtype=float), axis=1) ** (-(N - 2)) / ((N - 2) * sphere_area(N - 1))


@dataclass(frozen=True)
class GreenFit:
    coefficient: float
    relative_rms: float
    samples: int

    def to_dict(self) -> dict:
        return {"coefficient": self.coefficient, "relative_rms": self.relative_rms, "samples": self.samples}


def green_far_field_fit(u, centers: Sequence[Sequence[float]], delta: float, samples: int = 64,
                        seed: int = 0) -> GreenFit:
    """Fit u ~ a * sum_j G(y, x_j) on the annuli delta/2 < |y - x_j| < 2 delta."""
    C = np.asarray(centers, dtype=float)
    N = C.shape[1]
    rng = np.random.default_rng(seed)
    pts = []
    for c in C:
        d = rng.standard_normal((samples, N))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = rng.uniform(0.5 * delta, 2 * delta, samples)
        pts.append(c + r[:, None] * d)
    Y = np.concatenate(pts)
    g = sum(green(Y, c, N) for c in C)
    v = u.value(Y)
    a = float(g @ v / (g @ g))
    rel = float(np.sqrt(np.mean((v - a * g) ** 2)) / np.sqrt(np.mean(v**2)))
    return GreenFit(a, rel, int(Y.shape[0]))
