"""Objects of the finite-dimensional reduction around the glued ansatz

    u_k + sum_j U_{p_j, lambda},

with the outer tower u_k in the y1-y2 plane and the inner ring p_j in the
y3-y4 plane.  Pointwise operators take arrays of points ``(m, N)`` and
return arrays of length m.

The outer tower stands in for the true solution u_k; it is the unperturbed
bubble sum at the balanced scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bubble import Bubble, Kernel, Tower, critical_exponent, radial_moment
from .energy import fit_power, reduced_window, solve_balance
from .errors import InvalidConfigError, InvalidSpecError, MissingContextError
from .norms import NormEstimate, WeightSpec, tau_inner, weighted_sup_norm
from .potential import K_of_y, PotentialK
from .quadrature import QuadratureSpec, integrate_ball, integrate_ball_axisymmetric, integrate_volume
from .symmetry import PolygonConfig, SymmetryGroup


def _opow(x, q):
    """Odd power extension |x|^{q-1} x."""
    return np.abs(x) ** (q - 1) * x


def _pts(y, N):
    y = np.asarray(y, dtype=float)
    return y.reshape(1, N) if y.ndim == 1 else y


@dataclass(frozen=True)
class GluedConfig:
    """Outer k-gon tower (plane (1,2)) glued to an inner n-gon ring (plane (3,4)).

    ``outer`` may be None for an empty outer tower.
    """

    outer: Optional[PolygonConfig]
    inner: PolygonConfig
    potential: PotentialK

    def __post_init__(self):
        if self.inner.plane != (3, 4):
            raise InvalidConfigError("inner ring must lie in the (3, 4) plane")
        if self.outer is not None:
            if self.outer.plane != (1, 2):
                raise InvalidConfigError("outer tower must lie in the (1, 2) plane")
            if self.outer.dim != self.inner.dim:
                raise InvalidConfigError("outer and inner configurations must share dim")
        for cfg in (self.outer, self.inner):
            if cfg is not None and cfg.count != 1 and cfg.count % 2:
                raise InvalidConfigError(f"polygon counts must be 1 or even, got {cfg.count}")

    @classmethod
    def from_balance(cls, k: int, n: int, t: float, lam: float, K: PotentialK, dim: int = 7) -> "GluedConfig":
        """Outer tower at radius r0 with scale k * mu_bar from the balance relation."""
        sol = solve_balance(k, K, dim=dim)
        outer = PolygonConfig(k, K.r0, sol.mu, (1, 2), dim)
        return cls(outer, PolygonConfig(n, t, lam, (3, 4), dim), K)

    @property
    def dim(self) -> int:
        return self.inner.dim

    @property
    def lam(self) -> float:
        return self.inner.scale

    @property
    def outer_tower(self) -> Optional[Tower]:
        return None if self.outer is None else Tower.from_polygon(self.outer)

    @property
    def inner_tower(self) -> Tower:
        return Tower.from_polygon(self.inner)

    def glued(self) -> Tower:
        return Tower.from_polygon(self.inner, background=self.outer_tower)

    def in_window(self, delta: float = 0.1, lam0: float = 0.2, lam1: float = 5.0) -> bool:
        (t0, t1), (l0, l1) = reduced_window(self.inner.count, self.dim, self.potential.r0, delta, lam0, lam1)
        return t0 <= self.inner.radius <= t1 and l0 <= self.lam <= l1


def _outer_value(cfg: GluedConfig, y) -> np.ndarray:
    t = cfg.outer_tower
    return np.zeros(y.shape[0]) if t is None else t.value(y)


# --------------------------------------------------------------------------
# linear operators


def apply_Lk(xi, background, K: PotentialK, y) -> np.ndarray:
    """-Lap xi - (2*-1) K u^{2*-2} xi with u = ``background``."""
    N = xi.dim if hasattr(xi, "dim") else xi.bubble.dim
    y = _pts(y, N)
    p = critical_exponent(N) - 1
    u = background.value(y)
    return -xi.laplacian(y) - p * K_of_y(K, y) * np.abs(u) ** (p - 1) * xi.value(y)


def apply_Qn(xi, cfg: GluedConfig, y) -> np.ndarray:
    """-Lap xi - (2*-1) K (u_k + sum U_{p_j})^{2*-2} xi."""
    return apply_Lk(xi, cfg.glued(), cfg.potential, y)


def qn_lk_gap(xi, cfg: GluedConfig, y) -> tuple[np.ndarray, np.ndarray]:
    """(|Q_n xi - L_k xi|, mean-value bound) at the points y.

    The bound is (2*-1) sup K |xi| |(u_k + V)^{2*-2} - u_k^{2*-2}|.
    """
    N = cfg.dim
    y = _pts(y, N)
    p = critical_exponent(N) - 1
    uk = _outer_value(cfg, y)
    V = cfg.inner_tower.value(y)
    if cfg.outer is None:
        lk = -xi.laplacian(y)
    else:
        lk = apply_Lk(xi, cfg.outer_tower, cfg.potential, y)
    gap = np.abs(apply_Qn(xi, cfg, y) - lk)
    Kmax = 1.0 if cfg.potential.form == "constant-one" else max(1.0, float(np.max(K_of_y(cfg.potential, y))))
    bound = p * Kmax * np.abs(xi.value(y)) * np.abs(np.abs(uk + V) ** (p - 1) - np.abs(uk) ** (p - 1))
    return gap, bound


# --------------------------------------------------------------------------
# residual of the ansatz


def residual_decomposition(cfg: GluedConfig, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(J1, J2, J3) with J1 = K[(u+V)^p - u^p - V^p], J2 = V^p - sum U^p, J3 = (K-1) V^p."""
    N = cfg.dim
    y = _pts(y, N)
    p = critical_exponent(N) - 1
    K = K_of_y(cfg.potential, y)
    u = _outer_value(cfg, y)
    vals = [b.value(y) for b in cfg.inner_tower.bubbles]
    V = np.sum(vals, axis=0)
    J1 = K * (_opow(u + V, p) - _opow(u, p) - _opow(V, p))
    J2 = _opow(V, p) - sum(_opow(v, p) for v in vals)
    J3 = (K - 1.0) * _opow(V, p)
    return J1, J2, J3


def residual_ln(cfg: GluedConfig, y) -> np.ndarray:
    """l_n = K (u_k + V)^{2*-1} - K u_k^{2*-1} - sum U_{p_j}^{2*-1}."""
    N = cfg.dim
    y = _pts(y, N)
    p = critical_exponent(N) - 1
    K = K_of_y(cfg.potential, y)
    u = _outer_value(cfg, y)
    vals = [b.value(y) for b in cfg.inner_tower.bubbles]
    V = np.sum(vals, axis=0)
    return K * _opow(u + V, p) - K * _opow(u, p) - sum(_opow(v, p) for v in vals)


def inner_weight(cfg: GluedConfig, kind: str = "double-star") -> WeightSpec:
    N = cfg.dim
    return WeightSpec(cfg.inner_tower.centers, cfg.lam, tau_inner(N), kind, N)


def _require_dim7(cfg: GluedConfig):
    if cfg.dim < 7:
        raise InvalidConfigError("norm estimates for the glued problem need N >= 7")


def residual_ln_norm(cfg: GluedConfig, budget: int = 64, *, seed: int = 0, rel_tol: float = 1e-3,
                     workers: int = 1) -> NormEstimate:
    """Lower bound for ||l_n||_{**,n}.

    Outer centres are passed as extra starts: J1 peaks there, where the
    inner weight is smallest.
    """
    _require_dim7(cfg)
    extra = [] if cfg.outer is None else list(cfg.outer_tower.centers)
    return weighted_sup_norm(lambda y: residual_ln(cfg, y), inner_weight(cfg), budget, rel_tol=rel_tol,
                             seed=seed, extra_starts=extra, workers=workers)


@dataclass
class SlopeResult:
    x: list
    values: list
    converged: list
    slope: float
    intercept: float
    r_squared: float

    def to_dict(self) -> dict:
        return {"x": list(self.x), "values": list(self.values), "converged": list(self.converged),
                "slope": self.slope, "intercept": self.intercept, "r_squared": self.r_squared}

    def rows(self) -> list[tuple[float, float, bool]]:
        return list(zip(self.x, self.values, self.converged))


def residual_slope(n: int, K: PotentialK, lam_values: Sequence[float], *, k: int = 8, dim: int = 7,
                   t: Optional[float] = None, budget: int = 64, seed: int = 0, workers: int = 1) -> SlopeResult:
    """Sweep lambda and fit log ||l_n||_{**,n} against log lambda."""
    t = K.r0 if t is None else t
    sol = solve_balance(k, K, dim=dim)
    outer = PolygonConfig(k, K.r0, sol.mu, (1, 2), dim)
    vals, conv = [], []
    for lam in lam_values:
        cfg = GluedConfig(outer, PolygonConfig(n, t, float(lam), (3, 4), dim), K)
        est = residual_ln_norm(cfg, budget, seed=seed, workers=workers)
        vals.append(est.value)
        conv.append(est.converged)
    slope, icpt, r2 = fit_power(lam_values, vals)
    return SlopeResult([float(v) for v in lam_values], vals, conv, slope, icpt, r2)


# --------------------------------------------------------------------------
# nonlinear remainder


def remainder_Rn(xi, cfg: GluedConfig, y) -> np.ndarray:
    """K[(B + xi)^p - B^p - p B^{p-1} xi] with B = u_k + V and p = 2*-1."""
    N = cfg.dim
    y = _pts(y, N)
    p = critical_exponent(N) - 1
    B = cfg.glued().value(y)
    x = xi.value(y)
    out = _opow(B + x, p) - _opow(B, p) - p * np.abs(B) ** (p - 1) * x
    # direct differencing cancels for |xi| << B; sum the binomial series there
    small = (B > 0) & (np.abs(x) < 0.1 * B)
    if np.any(small):
        q = x[small] / B[small]
        acc = np.zeros_like(q)
        coef = p * (p - 1) / 2
        term = q * q
        for m in range(2, 16):
            acc += coef * term
            coef *= (p - m) / (m + 1)
            term = term * q
        out[small] = B[small] ** p * acc
    return K_of_y(cfg.potential, y) * out


class _Scaled:
    def __init__(self, s, f):
        self.s, self.f = s, f
        self.dim = f.dim if hasattr(f, "dim") else f.bubble.dim

    def value(self, y):
        return self.s * self.f.value(y)


def remainder_scaling(cfg: GluedConfig, xi0, s_values: Sequence[float] = (1e-1, 1e-2, 1e-3), *,
                      budget: int = 64, seed: int = 0) -> SlopeResult:
    """Fit the exponent of ||R_n(s xi0)||_{**,n} (lower bound) against s."""
    _require_dim7(cfg)
    w = inner_weight(cfg)
    extra = [] if cfg.outer is None else list(cfg.outer_tower.centers)
    vals, conv = [], []
    for s in s_values:
        f = _Scaled(float(s), xi0)
        est = weighted_sup_norm(lambda y: remainder_Rn(f, cfg, y), w, budget, seed=seed, extra_starts=extra)
        vals.append(est.value)
        conv.append(est.converged)
    slope, icpt, r2 = fit_power(s_values, vals)
    return SlopeResult([float(s) for s in s_values], vals, conv, slope, icpt, r2)


# --------------------------------------------------------------------------
# kernel coefficients


@dataclass(frozen=True)
class KernelCoefficients:
    b0: float
    b1: float
    index: Optional[int]
    residual: float
    norms: tuple[float, float] = (0.0, 0.0)  # <psi_0, psi_0>, <psi_1, psi_1>
    errors: tuple[float, float] = (0.0, 0.0)

    def to_dict(self) -> dict:
        return {"b0": self.b0, "b1": self.b1, "index": self.index, "residual": self.residual,
                "norms": list(self.norms), "errors": list(self.errors)}


def projection_norms(N: int, R: float = 20.0) -> tuple[float, float]:
    """Closed forms of <psi_0, psi_0> and <psi_1, psi_1> on B_R for the unit bubble.

    psi_0 = c (N-2)/2 (1 - r^2) s^{-N/2} and psi_1 = -(N-2) c y_1 s^{-N/2},
    s = 1 + r^2, weight U^{2*-2} = c^{2*-2} s^{-2}.
    """
    c = (N * (N - 2)) ** ((N - 2) / 4)
    ts = critical_exponent(N)
    cc = c**ts
    n0 = cc * (N - 2) ** 2 / 4 * (radial_moment(N, N + 2, 0, R) - 2 * radial_moment(N, N + 2, 2, R)
                                  + radial_moment(N, N + 2, 4, R))
    n1 = cc * (N - 2) ** 2 * radial_moment(N, N + 2, 2, R) / N
    return n0, n1


def _is_axisymmetric(f, e, N, R, samples=64, seed=0) -> bool:
    """Probe f for invariance under rotations fixing the axis e."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((samples, N)) * (0.2 * R / math.sqrt(N))
    # reflect the component orthogonal to e through a random hyperplane
    v = rng.standard_normal(N)
    v -= (v @ e) * e
    v /= np.linalg.norm(v)
    w = z - 2.0 * np.outer(z @ v, v)
    a, b = f(z), f(w)
    return bool(np.all(np.abs(a - b) <= 1e-12 * (np.abs(a) + np.abs(b)) + 1e-300))


def kernel_projection(xi, b: Bubble, spec: QuadratureSpec, R: float = 20.0,
                      direction: Optional[Sequence[float]] = None,
                      axisymmetric: Optional[bool] = None) -> KernelCoefficients:
    """Coefficients of the rescaled field on psi_0 and psi_1 near the bubble ``b``.

    xi~(z) = mu^{-(N-2)/2} xi(z/mu + x) is paired with psi_i under
    <f, g> = int_{B_R} U^{2*-2} f g and divided by <psi_i, psi_i>.  psi_1
    differentiates along ``direction``: the bubble's radial direction when
    it has a parent polygon, else e_1.  Fields invariant under rotations
    about that axis (detected by probing unless ``axisymmetric`` is given)
    are integrated over a meridian half-disc.
    """
    N = b.dim
    mu, x = b.scale, b.center
    ts = critical_exponent(N)
    if direction is None:
        try:
            direction = b.radial_direction()
        except MissingContextError:
            direction = np.eye(N)[0]
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    unit = Bubble(np.zeros(N), 1.0, N)

    def xt(z):
        return mu ** (-(N - 2) / 2) * xi.value(z / mu + x)

    def psi0(z):
        return unit.d_scale(z)

    def psi1(z):
        return unit.grad(z) @ e

    def wgt(z):
        return unit.value(z) ** (ts - 2)

    n0, n1 = projection_norms(N, R)
    feats = [(np.zeros(N), 1.0)]
    zero = np.zeros(N)
    if axisymmetric is None:
        axisymmetric = _is_axisymmetric(xt, e, N, R)
    integrator = integrate_ball_axisymmetric if axisymmetric else integrate_ball

    def ball(f, atol):
        sp = spec.with_(abs_tol=max(spec.abs_tol, atol))
        return integrator(f, zero, R, sp, axis=e, features=feats)

    nx = ball(lambda z: wgt(z) * xt(z) ** 2, 0.0).value
    # projections that vanish by parity are resolved relative to |xi~| |psi_i|
    p0 = ball(lambda z: wgt(z) * xt(z) * psi0(z), spec.rel_tol * math.sqrt(nx * n0))
    p1 = ball(lambda z: wgt(z) * xt(z) * psi1(z), spec.rel_tol * math.sqrt(nx * n1))
    b0, b1 = p0.value / n0, p1.value / n1
    res = ball(lambda z: wgt(z) * (xt(z) - b0 * psi0(z) - b1 * psi1(z)) ** 2, spec.rel_tol * nx)
    return KernelCoefficients(b0, b1, b.index, math.sqrt(max(res.value, 0.0)), (n0, n1),
                              (p0.error_estimate / n0, p1.error_estimate / n1))


def projection_oracle_U(N: int, R: float = 20.0) -> float:
    """b0 for xi = U: <U, psi_0> / <psi_0, psi_0> from ball-truncated moments."""
    c = (N * (N - 2)) ** ((N - 2) / 4)
    ts = critical_exponent(N)
    num = c**ts * (N - 2) / 2 * (radial_moment(N, N + 1, 0, R) - radial_moment(N, N + 1, 2, R))
    return num / projection_norms(N, R)[0]


# --------------------------------------------------------------------------
# Gram system of the projected problem


@dataclass
class GramResult:
    matrix: np.ndarray
    errors: np.ndarray
    method: str
    min_eigenvalue: float
    off_block_ratio: float

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), "errors": self.errors.tolist(), "method": self.method,
                "min_eigenvalue": self.min_eigenvalue, "off_block_ratio": self.off_block_ratio}


def gram_matrix(cfg: GluedConfig, spec: QuadratureSpec, method: str = "gradient") -> GramResult:
    """Matrix of int U_{p_j}^{2*-2} Z_{j,i} Z_{j',i'}, rows ordered (j, i) with i = 1 (radius), 2 (scale).

    ``gradient`` uses -Lap Z = (2*-1) U^{2*-2} Z, so the entry equals
    int grad Z . grad Z' / (2*-1), which is symmetric by construction.
    ``direct`` integrates the weighted product with the weight of the row
    bubble; it agrees up to quadrature error.
    """
    if method not in ("gradient", "direct"):
        raise InvalidSpecError(f"unknown Gram method {method!r}")
    N = cfg.dim
    p = critical_exponent(N) - 1
    bubbles = cfg.inner_tower.bubbles
    Z = [Kernel(bb, kind) for bb in bubbles for kind in ("Z1", "Z2")]
    m = len(Z)
    G = np.zeros((m, m))
    E = np.zeros((m, m))
    group = SymmetryGroup(((1, (3, 4)),), frozenset(), N)
    sp = spec.with_(mode="cylinder-3d")
    def entry(a, c, atol):
        za, zc = Z[a], Z[c]
        ba, bc = za.bubble, zc.bubble
        feats = [(ba.center, 1 / ba.scale), (bc.center, 1 / bc.scale)]
        if method == "gradient":
            f = (lambda y: np.einsum("ij,ij->i", za.grad(y), zc.grad(y)) / p)
            decay = 2 * N - 2
        else:
            f = (lambda y: ba.value(y) ** (p - 1) * za.value(y) * zc.value(y))
            decay = 2 * N
        r = integrate_volume(f, sp.with_(abs_tol=max(sp.abs_tol, atol)), group, dim=N, decay=decay,
                             features=feats, plane=(3, 4))
        return r.value, r.error_estimate

    for a in range(m):
        G[a, a], E[a, a] = entry(a, a, 0.0)
    for a in range(m):
        for c in range(a + 1 if method == "gradient" else 0, m):
            if c == a:
                continue
            # entries small by parity or separation are resolved relative to the diagonal
            G[a, c], E[a, c] = entry(a, c, spec.rel_tol * math.sqrt(abs(G[a, a] * G[c, c])))
            if method == "gradient":
                G[c, a], E[c, a] = G[a, c], E[a, c]
    eig = float(np.min(np.linalg.eigvalsh(0.5 * (G + G.T))))
    d = np.sqrt(np.abs(np.diag(G)))
    mask = np.ones((m, m), dtype=bool)
    for j in range(len(bubbles)):
        mask[2 * j:2 * j + 2, 2 * j:2 * j + 2] = False
    # off-block coupling relative to the geometric mean of the two diagonals
    off = float(np.max(np.abs(G / np.outer(d, d))[mask])) if mask.any() else 0.0
    return GramResult(G, E, method, eig, off)
