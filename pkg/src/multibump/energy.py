"""Energy functional, bubble interactions, the reduced-energy expansion and its
critical points, and the balance equation fixing the outer bubble scale.

    I(u) = 1/2 int |grad u|^2 - 1/2* int K |u|^{2*}

For a bubble tower the energy is split as sum_j S_mass/N (exact, since every
bubble has the same energy) plus the integral of the pointwise deviation from
the separated bubbles, which is small and integrates to high relative
accuracy.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .bubble import Bubble, Tower, c_N, closed_moments, critical_exponent
from .errors import (
    BoundaryHitError,
    DegenerateConfigurationError,
    FitError,
    InvalidConfigError,
    NoBalanceError,
)
from .potential import K_of_y, PotentialK, laplacian_K
from .quadrature import IntegralResult, QuadratureSpec, integrate_volume
from .symmetry import PolygonConfig, SymmetryGroup


def _power(u: np.ndarray, p: float) -> np.ndarray:
    """|u|^p."""
    return np.abs(u) ** p


# --------------------------------------------------------------------------
# energy and interaction


def _tower_symmetry(tower: Tower) -> tuple[Optional[SymmetryGroup], Optional[tuple[int, int]]]:
    """Polygon group of a tower built from one PolygonConfig, if any."""
    parents = {id(b.parent): b.parent for b in tower.bubbles if b.parent is not None}
    if len(parents) != 1 or tower.background is not None:
        return None, None
    cfg = next(iter(parents.values()))
    if len(tower.bubbles) != cfg.count:
        return None, None
    N = cfg.dim
    refl = frozenset(i for i in range(1, N + 1) if i != cfg.plane[0])
    return SymmetryGroup(((cfg.count, tuple(cfg.plane)),), refl, N), tuple(cfg.plane)


def energy(
    u,
    K: PotentialK,
    spec: QuadratureSpec,
    *,
    split: bool = True,
    symmetry: Optional[SymmetryGroup] = None,
    plane: Optional[tuple[int, int]] = None,
    center: Optional[Sequence[float]] = None,
) -> IntegralResult:
    """I(u) for a Tower (or any field with value/grad and ``dim``).

    ``split`` uses the per-bubble closed form plus the deviation integral; it
    applies to towers of bubbles only.  For ``cylinder-3d`` the polygon group
    of a single-config tower is used unless ``symmetry`` is given.
    """
    N = u.dim
    ts = critical_exponent(N)
    bubbles = list(getattr(u, "bubbles", []))
    features = u.features() if hasattr(u, "features") else []
    if spec.mode == "cylinder-3d" and symmetry is None and isinstance(u, Tower):
        symmetry, plane = _tower_symmetry(u)
        if symmetry is None:
            raise InvalidConfigError("cylinder-3d energy needs a symmetry group for this field")
    use_split = split and isinstance(u, Tower) and u.background is None and bubbles

    if use_split:
        S = closed_moments(N).S_mass

        def dens(y):
            grads = [b.grad(y) for b in bubbles]
            vals = [b.value(y) for b in bubbles]
            g = np.sum(grads, axis=0)
            v = np.sum(vals, axis=0)
            cross = 0.5 * (np.einsum("ij,ij->i", g, g) - sum(np.einsum("ij,ij->i", a, a) for a in grads))
            pot = K_of_y(K, y) * _power(v, ts) - sum(_power(w, ts) for w in vals)
            return cross - pot / ts

        res = integrate_volume(dens, spec, symmetry, dim=N, decay=2 * N - 2, features=features,
                               plane=plane, center=center)
        return IntegralResult(len(bubbles) * S / N + res.value, res.error_estimate, res.cells_used,
                              res.truncation_bound)

    def dens(y):
        g = u.grad(y)
        return 0.5 * np.einsum("ij,ij->i", g, g) - K_of_y(K, y) * _power(u.value(y), ts) / ts

    return integrate_volume(dens, spec, symmetry, dim=N, decay=2 * N - 2, features=features,
                            plane=plane, center=center)


@dataclass(frozen=True)
class InteractionResult:
    value: float
    error_estimate: float
    ratio: Optional[float]
    distance: float

    def to_dict(self) -> dict:
        return asdict(self)


def interaction(b1: Bubble, b2: Bubble, spec: QuadratureSpec) -> InteractionResult:
    """int U_1^{2*-1} U_2, with the asymptotic ratio value (mu d)^{N-2} / (c_N A_mass).

    The pair is moved by an isometry to +-d/2 on the y_1 axis and integrated
    in cylinder coordinates (it is axisymmetric about the line of centres).
    """
    if b1.dim != b2.dim:
        raise InvalidConfigError("bubbles must share dim")
    N = b1.dim
    d = float(np.linalg.norm(b1.center - b2.center))
    if d == 0:
        raise DegenerateConfigurationError("coincident centers")
    e = np.zeros(N)
    e[0] = 0.5 * d
    a1 = Bubble(-e, b1.scale, N)
    a2 = Bubble(e, b2.scale, N)
    ts = critical_exponent(N)
    group = SymmetryGroup(((1, (1, 2)),), frozenset({2}), N)
    res = integrate_volume(
        lambda y: a1.value(y) ** (ts - 1) * a2.value(y),
        spec.with_(mode="cylinder-3d"), group, dim=N, decay=2 * N,
        features=[(a1.center, 1 / a1.scale), (a2.center, 1 / a2.scale)],
    )
    ratio = None
    if b1.scale == b2.scale:
        ratio = res.value * (b1.scale * d) ** (N - 2) / (c_N(N) * closed_moments(N).A_mass)
    return InteractionResult(res.value, res.error_estimate, ratio, d)


# --------------------------------------------------------------------------
# reduced-energy expansion


@dataclass(frozen=True)
class ExpansionConstants:
    A: float
    B1: float
    B2: float
    B3: float
    sigma: float = 0.0
    r0: float = 1.0
    dim: int = 7

    def __post_init__(self):
        if not (self.B1 > 0 and self.B2 > 0 and self.B3 > 0):
            raise InvalidConfigError("B1, B2, B3 must be positive")
        if self.dim < 5:
            raise InvalidConfigError("expansion needs N >= 5")

    def to_dict(self) -> dict:
        return asdict(self)


def expansion_energy(t: float, lam: float, n: int, c: ExpansionConstants, base: float = 0.0,
                     reading: str = "adopted") -> float:
    """base + nA + n(B1/lam^2 + B2 (r0 - t)^2 - B3 n^{N-2}/lam^{N-2}).

    ``reading='printed'`` evaluates the quadratic term as B2/lam^2 (lam r0 - t)^2.
    """
    if not lam > 0 or n < 1:
        raise InvalidConfigError("need lam > 0 and n >= 1")
    N = c.dim
    if reading == "adopted":
        quad = c.B2 * (c.r0 - t) ** 2
    elif reading == "printed":
        quad = c.B2 / lam**2 * (lam * c.r0 - t) ** 2
    else:
        raise InvalidConfigError(f"unknown reading {reading!r}")
    bracket = c.B1 / lam**2 + quad - c.B3 * n ** (N - 2) / lam ** (N - 2)
    return base + n * c.A + n * bracket


def lambda_star(c: ExpansionConstants, n: int) -> float:
    N = c.dim
    return ((N - 2) * c.B3 / (2 * c.B1)) ** (1.0 / (N - 4)) * n ** ((N - 2) / (N - 4))


def window_scale(n: int, N: int) -> float:
    """n^{(N-2)/(N-4)}, the natural size of the inner scale."""
    return n ** ((N - 2) / (N - 4))


def reduced_window(n: int, N: int, r0: float = 1.0, delta: float = 0.1,
                   lam0: float = 0.2, lam1: float = 5.0) -> tuple[tuple[float, float], tuple[float, float]]:
    s = window_scale(n, N)
    return (r0 - delta, r0 + delta), (lam0 * s, lam1 * s)


@dataclass
class FitResult:
    constants: Optional[ExpansionConstants]
    raw: tuple[float, float, float, float]
    residuals: np.ndarray
    rms: float
    max_abs: float
    positive: bool

    def to_dict(self) -> dict:
        return {
            "constants": None if self.constants is None else self.constants.to_dict(),
            "raw": {"A": self.raw[0], "B1": self.raw[1], "B2": self.raw[2], "B3": self.raw[3]},
            "residual_rms": self.rms,
            "residual_max": self.max_abs,
            "positive": self.positive,
        }


def fit_expansion_constants(samples: Sequence[Sequence[float]], *, dim: int, r0: float = 1.0,
                            base: float = 0.0) -> FitResult:
    """Least-squares (A, B1, B2, B3) from samples (t, lam, n, I[, base]).

    The design columns are n, n/lam^2, n (r0 - t)^2 and -n^{N-1}/lam^{N-2};
    columns are scaled to unit norm before solving.
    """
    S = np.array([list(s) for s in samples], dtype=float)
    if S.ndim != 2 or S.shape[0] < 6 or S.shape[1] not in (4, 5):
        raise FitError("need at least 6 samples of (t, lam, n, I[, base])")
    t, lam, n, I = S[:, 0], S[:, 1], S[:, 2], S[:, 3]
    b = S[:, 4] if S.shape[1] == 5 else np.full(len(S), base)
    N = dim
    X = np.stack([n, n / lam**2, n * (r0 - t) ** 2, -n ** (N - 1) / lam ** (N - 2)], axis=1)
    y = I - b
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0):
        raise FitError("design has an all-zero column")
    Xs = X / norms
    sv = np.linalg.svd(Xs, compute_uv=False)
    if sv[-1] < 1e-10 * sv[0]:
        raise FitError("rank-deficient design: samples do not separate the constants")
    coef, *_ = np.linalg.lstsq(Xs, y, rcond=None)
    coef = coef / norms
    resid = y - X @ coef
    A, B1, B2, B3 = (float(v) for v in coef)
    positive = B1 > 0 and B2 > 0 and B3 > 0
    consts = ExpansionConstants(A, B1, B2, B3, 0.0, r0, N) if positive else None
    return FitResult(consts, (A, B1, B2, B3), resid, float(np.sqrt(np.mean(resid**2))),
                     float(np.max(np.abs(resid))), positive)


def inner_ring(n: int, t: float, lam: float, N: int) -> Tower:
    return Tower.from_polygon(PolygonConfig(n, t, lam, (3, 4), N))


def true_energy_samples(
    n_values: Sequence[int],
    K: PotentialK,
    spec: QuadratureSpec,
    *,
    dim: int = 7,
    lam_factors: Sequence[float] = (0.25, 0.4, 0.7, 1.2),
    t_offsets: Sequence[float] = (-0.05, 0.0, 0.05),
) -> list[tuple[float, float, int, float]]:
    """(t, lam, n, I) with I the energy of the inner ring alone under K.

    The glued energy splits as I(u_k) + I(inner ring) up to terms below the
    expansion remainder, so I(u_k) enters the fit only as ``base``.
    """
    out = []
    sp = spec.with_(mode="cylinder-3d")
    for n in n_values:
        s = window_scale(n, dim)
        for f in lam_factors:
            for dt in t_offsets:
                lam = f * s
                t = K.r0 + dt
                val = energy(inner_ring(n, t, lam, dim), K, sp).value
                out.append((t, lam, int(n), val))
    return out


# --------------------------------------------------------------------------
# critical points of F(t, lam)


@dataclass
class CriticalPoint:
    t: float
    lam: float
    classification: str
    gradient_norm: float
    eigenvalues: tuple[float, float]
    iterations: int

    def to_dict(self) -> dict:
        return asdict(self)


def _grad_hess(F, x, h):
    """4th-order central gradient and 2nd-order Hessian of F at x."""
    g = np.zeros(2)
    H = np.zeros((2, 2))
    f0 = F(*x)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h[i]
        fp1, fm1 = F(*(x + e)), F(*(x - e))
        fp2, fm2 = F(*(x + 2 * e)), F(*(x - 2 * e))
        g[i] = (-fp2 + 8 * fp1 - 8 * fm1 + fm2) / (12 * h[i])
        H[i, i] = (fp1 - 2 * f0 + fm1) / h[i] ** 2
    e0, e1 = np.array([h[0], 0]), np.array([0, h[1]])
    H[0, 1] = H[1, 0] = (F(*(x + e0 + e1)) - F(*(x + e0 - e1)) - F(*(x - e0 + e1)) + F(*(x - e0 - e1))) / (
        4 * h[0] * h[1])
    return g, H


def find_critical_point(
    F: Callable[[float, float], float],
    window: tuple[tuple[float, float], tuple[float, float]],
    tol: float = 1e-8,
    *,
    grid: int = 7,
    max_iter: int = 60,
    trust: float = 0.25,
    step: float = 1e-3,
) -> CriticalPoint:
    """Interior stationary point of F(t, lam) in the window by trust-region Newton.

    Works in coordinates (t, log lam) normalised to the window; starts are
    taken from a grid, best gradient first.  ``tol`` bounds the final Newton
    step in window-relative units.  A run that leaves the window or cannot get
    off its boundary is discarded; if none succeeds, BoundaryHitError.
    """
    (t0, t1), (l0, l1) = window
    if not (t1 > t0 and l1 > l0 > 0):
        raise InvalidConfigError("window must be nondegenerate with lam > 0")
    lo = np.array([t0, math.log(l0)])
    span = np.array([t1 - t0, math.log(l1) - math.log(l0)])

    def G(u, v):  # F in normalised coordinates
        x = lo + span * np.array([u, v])
        return F(float(x[0]), float(math.exp(x[1])))

    h = np.array([step, step])
    pts = (np.arange(grid) + 0.5) / grid
    cands = []
    for u in pts:
        for v in pts:
            g, _ = _grad_hess(G, np.array([u, v]), h)
            cands.append((float(np.linalg.norm(g)), u, v))
    cands.sort()
    last_err = "no start converged"
    for _, u, v in cands[:6]:
        x = np.array([u, v])
        for it in range(1, max_iter + 1):
            g, H = _grad_hess(G, x, h)
            try:
                dx = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                last_err = "singular Hessian"
                break
            nrm = np.linalg.norm(dx)
            if nrm > trust:
                dx *= trust / nrm
            x = x + dx
            if np.any(x <= 0) or np.any(x >= 1):
                last_err = "iterate left the window"
                break
            if np.linalg.norm(dx) < tol:
                g, H = _grad_hess(G, x, h)
                ev = np.linalg.eigvalsh(H)
                if np.all(ev > 0):
                    kind = "minimum"
                elif np.all(ev < 0):
                    kind = "maximum"
                elif np.all(ev != 0):
                    kind = "saddle"
                else:
                    kind = "degenerate"
                tt = float(lo[0] + span[0] * x[0])
                lam = float(math.exp(lo[1] + span[1] * x[1]))
                # gradient in the original (t, lam) coordinates
                jac = np.array([span[0], span[1] * lam])
                return CriticalPoint(tt, lam, kind, float(np.linalg.norm(g / jac)), (float(ev[0]), float(ev[1])), it)
        else:
            last_err = "Newton did not settle"
    raise BoundaryHitError(f"no interior stationary point in the window ({last_err})")


# --------------------------------------------------------------------------
# balance equation


@dataclass(frozen=True)
class BalanceSolution:
    k: int
    mu_bar: float
    r_bar: float
    mu: float
    residual: float
    nearest_neighbor_guess: float
    dim: int

    def to_dict(self) -> dict:
        return asdict(self)


def neighbor_sum(k: int, r_bar: float, N: int, nearest_only: bool = False) -> float:
    """sum_{j=2..k} |x_j - x_1|^{-(N-2)} with |x_j - x_1| = 2 r_bar sin((j-1)pi/k)."""
    js = np.array([2, k]) if nearest_only else np.arange(2, k + 1)
    if nearest_only and k == 2:
        js = np.array([2])
    d = 2 * r_bar * np.sin((js - 1) * math.pi / k)
    return float(np.sum(d ** (-(N - 2))))


def balance_sides(mu_bar: float, k: int, K: PotentialK, N: int, nearest_only: bool = False) -> tuple[float, float]:
    """(left, right) of the truncated balance relation at mu_bar."""
    m = closed_moments(N)
    ts = m.two_star
    e = np.zeros(N)
    e[0] = K.r0
    dK = float(laplacian_K(K, e)[0])
    r_bar = k * K.r0
    left = -(1 / ts) * dK / (N * mu_bar**3 * k**2) * m.M2
    right = (N - 2) / (2 * mu_bar ** (N - 1)) * m.c_N * m.A_mass * neighbor_sum(k, r_bar, N, nearest_only)
    return left, right


def balance_closed_form(k: int, K: PotentialK, N: int, nearest_only: bool = True) -> float:
    """mu_bar from the truncated balance solved by algebra."""
    m = closed_moments(N)
    e = np.zeros(N)
    e[0] = K.r0
    dK = float(laplacian_K(K, e)[0])
    if dK >= 0:
        raise NoBalanceError(f"Laplacian of K at r0 is {dK:.3e} >= 0: no balance")
    S = neighbor_sum(k, k * K.r0, N, nearest_only)
    val = (N - 2) * m.two_star * N * m.c_N * m.A_mass * k**2 * S / (2 * abs(dK) * m.M2)
    return val ** (1.0 / (N - 4))


def solve_balance(k: int, K: PotentialK, tol: float = 1e-13, *, dim: int = 7) -> BalanceSolution:
    """Solve the balance relation (full neighbour sum) for mu_bar by bracketing."""
    N = dim
    if k < 2:
        raise InvalidConfigError("balance needs k >= 2")
    if N < 5:
        raise InvalidConfigError("balance needs N >= 5")
    guess = balance_closed_form(k, K, N, nearest_only=True)

    def g(logm):
        left, right = balance_sides(math.exp(logm), k, K, N)
        return math.log(left) - math.log(right)

    a, b = math.log(guess) - 1.0, math.log(guess) + 1.0
    while g(a) > 0:
        a -= 1.0
    while g(b) < 0:
        b += 1.0
    root = brentq(g, a, b, xtol=tol, rtol=4 * np.finfo(float).eps)
    mu_bar = math.exp(root)
    left, right = balance_sides(mu_bar, k, K, N)
    return BalanceSolution(k, mu_bar, k * K.r0, k * mu_bar, abs(left - right) / abs(left), guess, N)


def fit_power(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares slope, intercept and R^2 of log y against log x."""
    lx, ly = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ np.array([slope, icpt])
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(icpt), r2
