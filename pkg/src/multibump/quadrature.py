"""Error-controlled integration over R^N, spheres and balls.

Volume integrals use adaptive box cubature: tensor Gauss-Legendre rules of two
orders on every cell, the difference of the two serving as the cell error.
The mesh starts graded around declared features (bubble centres with their
length scales) and is then refined by bisection of the cells carrying the
largest errors.  The refinement path does not depend on the tolerances, so a
tighter tolerance only continues the same path.

Three reductions are available:

``full-Nd``      the box [-R, R]^N.
``cylinder-3d``  (s, theta, t): polar coordinates in one coordinate plane and
                 t = |complement|, weight s * |S^{N-3}| t^{N-3}.  Valid for
                 integrands invariant under rotations of the complement and
                 under the polygon group of the plane.
``radial-1d``    r = |y - center|, weight |S^{N-1}| r^{N-1}; radial integrands.

Integrands are vectorised callables mapping an ``(M, N)`` array of points to
``(M,)`` values.  Cell sums are reduced by fixed-order pairwise summation, so
results are bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import roots_jacobi

from .bubble import sphere_area
from .errors import ConvergenceError, InvalidSpecError
from .symmetry import SymmetryGroup

Integrand = Callable[[np.ndarray], np.ndarray]
MODES = ("full-Nd", "cylinder-3d", "radial-1d")

# (high, low) tensor Gauss orders by cell dimension
_DEFAULT_ORDERS = {1: (15, 10), 2: (9, 6), 3: (6, 4), 4: (6, 4), 5: (6, 4)}
_POINT_BUDGET = 250_000  # integrand points per evaluation batch


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    truncation_radius: Union[float, str] = "auto"
    max_subdivisions: int = 400_000
    seed: int = 0
    mode: str = "full-Nd"
    order: Optional[int] = None
    workers: int = 1
    grading: Optional[float] = None

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise InvalidSpecError("tolerances must be positive")
        if self.mode not in MODES:
            raise InvalidSpecError(f"unknown reduction mode {self.mode!r}")
        tr = self.truncation_radius
        if not (tr == "auto" or (isinstance(tr, (int, float)) and tr > 0)):
            raise InvalidSpecError("truncation_radius must be 'auto' or positive")
        if self.max_subdivisions < 1 or self.workers < 1 or not (self.grading is None or self.grading > 0):
            raise InvalidSpecError("max_subdivisions, workers and grading must be positive")

    def with_(self, **kw) -> "QuadratureSpec":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class IntegralResult:
    value: float
    error_estimate: float
    cells_used: int
    truncation_bound: float = 0.0

    def __add__(self, other: "IntegralResult") -> "IntegralResult":
        return IntegralResult(
            self.value + other.value,
            self.error_estimate + other.error_estimate,
            self.cells_used + other.cells_used,
            self.truncation_bound + other.truncation_bound,
        )

    def scaled(self, c: float) -> "IntegralResult":
        return IntegralResult(c * self.value, abs(c) * self.error_estimate, self.cells_used,
                              abs(c) * self.truncation_bound)


def pairwise_sum(values) -> float:
    """Sum in a fixed binary-tree order (independent of how values were produced)."""
    x = np.array(values, dtype=float).ravel()
    if x.size == 0:
        return 0.0
    while x.size > 1:
        if x.size % 2:
            x = np.append(x, 0.0)
        x = x[0::2] + x[1::2]
    return float(x[0])


# --------------------------------------------------------------------------
# tensor rules on [0, 1]^d


@lru_cache(maxsize=None)
def _tensor_rule(m: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(m)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    grids = np.meshgrid(*([x] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    wg = np.meshgrid(*([w] * d), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wg], axis=1), axis=1)
    return nodes, weights


def _orders(d: int, order: Optional[int]) -> tuple[int, int]:
    if order is not None:
        return order, max(1, (2 * order) // 3)
    return _DEFAULT_ORDERS.get(d, (4, 3))


def _rule(d: int, order: Optional[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(nodes, high weights, low weights) on [0, 1]^d sharing one node set."""
    mh, ml = _orders(d, order)
    nh, wh = _tensor_rule(mh, d)
    nl, wl = _tensor_rule(ml, d)
    nodes = np.concatenate([nh, nl])
    return nodes, np.concatenate([wh, np.zeros(len(wl))]), np.concatenate([np.zeros(len(wh)), wl])


# --------------------------------------------------------------------------
# geometry of the reduced coordinate boxes


class _Geometry:
    """Euclidean cell size and distance to features in box coordinates."""

    def __init__(self, points: np.ndarray, scales: np.ndarray):
        self.points = np.asarray(points, dtype=float)
        self.scales = np.asarray(scales, dtype=float)

    def sides(self, lo, hi):
        return hi - lo

    def reach(self, lo, hi) -> np.ndarray:
        """min over features of (distance from cell to feature + feature scale)."""
        if self.points.size == 0:
            return np.full(lo.shape[0], np.inf)
        best = np.full(lo.shape[0], np.inf)
        for p, sc in zip(self.points, self.scales):
            gap = np.maximum(0.0, np.maximum(lo - p, p - hi))
            best = np.minimum(best, np.sqrt(np.einsum("ij,ij->i", gap, gap)) + sc)
        return best


class _CylinderGeometry(_Geometry):
    """Coordinates (s, theta, t); angular gaps measured as arc length."""

    def sides(self, lo, hi):
        out = hi - lo
        out[:, 1] = out[:, 1] * hi[:, 0]
        return out

    def reach(self, lo, hi):
        if self.points.size == 0:
            return np.full(lo.shape[0], np.inf)
        best = np.full(lo.shape[0], np.inf)
        for p, sc in zip(self.points, self.scales):
            gap = np.maximum(0.0, np.maximum(lo - p, p - hi))
            gap[:, 1] *= p[0]
            best = np.minimum(best, np.sqrt(np.einsum("ij,ij->i", gap, gap)) + sc)
        return best


# --------------------------------------------------------------------------
# adaptive engine


def _eval_cells(g, lo, hi, rule, workers, cost):
    nodes, wh, wl = rule
    d = lo.shape[1]
    nper = len(wh) * cost
    per_chunk = max(1, _POINT_BUDGET // nper)
    starts = list(range(0, lo.shape[0], per_chunk))

    def run(s):
        a, b = lo[s:s + per_chunk], hi[s:s + per_chunk]
        width = b - a
        vol = np.prod(width, axis=1)
        pts = (a[:, None, :] + width[:, None, :] * nodes[None]).reshape(-1, d)
        f = np.asarray(g(pts), dtype=float).reshape(a.shape[0], -1)
        return [np.sum(f * w[None, :], axis=1) * vol for w in (wh, wl)]

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    qh = np.concatenate([p[0] for p in parts])
    ql = np.concatenate([p[1] for p in parts])
    if not np.all(np.isfinite(qh)) or not np.all(np.isfinite(ql)):
        raise InvalidSpecError("integrand returned non-finite values")
    return qh, np.abs(qh - ql)


def _split_axis(lo, hi, axis):
    """Halve every cell along its own ``axis`` entry; children interleaved per parent."""
    rows = np.arange(lo.shape[0])
    mid = 0.5 * (lo[rows, axis] + hi[rows, axis])
    hi1 = hi.copy()
    hi1[rows, axis] = mid
    lo2 = lo.copy()
    lo2[rows, axis] = mid
    clo = np.stack([lo, lo2], axis=1).reshape(-1, lo.shape[1])
    chi = np.stack([hi1, hi], axis=1).reshape(-1, lo.shape[1])
    return clo, chi


def _bisect(lo, hi, geom):
    return _split_axis(lo, hi, np.argmax(geom.sides(lo, hi), axis=1))


def _graded_mesh(lo, hi, geom, grading, limit, max_levels=60):
    """Split cells until every side is at most grading * (distance to feature + scale).

    Only the offending sides are halved, so anisotropic boxes (such as the
    angular side of cylinder cells) are not over-resolved.
    """
    lo = np.atleast_2d(np.asarray(lo, dtype=float))
    hi = np.atleast_2d(np.asarray(hi, dtype=float))
    done_lo, done_hi = [], []
    for _ in range(max_levels):
        sides = geom.sides(lo, hi)
        thr = grading * geom.reach(lo, hi)
        need = np.max(sides, axis=1) > thr
        done_lo.append(lo[~need])
        done_hi.append(hi[~need])
        lo, hi, sides, thr = lo[need], hi[need], sides[need], thr[need]
        if lo.shape[0] == 0:
            break
        if sum(a.shape[0] for a in done_lo) + 2 * lo.shape[0] > limit:
            break
        lo, hi = _split_axis(lo, hi, np.argmax(sides / thr[:, None], axis=1))
    done_lo.append(lo)
    done_hi.append(hi)
    return np.concatenate(done_lo), np.concatenate(done_hi)


def adaptive_cubature(
    g: Integrand,
    lo: Sequence[float],
    hi: Sequence[float],
    spec: QuadratureSpec,
    geom: Optional[_Geometry] = None,
    truncation_bound: float = 0.0,
    cost: int = 1,
) -> IntegralResult:
    """Integrate ``g`` over the box [lo, hi] to the tolerances of ``spec``.

    ``truncation_bound`` is added to the error budget (tail outside the box).
    ``cost`` is the number of underlying evaluations per cubature node and only
    affects batching.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = lo.size
    if geom is None:
        geom = _Geometry(np.zeros((0, d)), np.zeros(0))
    rules = _rule(d, spec.order)
    grading = spec.grading if spec.grading is not None else (0.5 if d <= 3 else 2.0)
    clo, chi = _graded_mesh(lo, hi, geom, grading, spec.max_subdivisions // 2)
    vals, errs = _eval_cells(g, clo, chi, rules, spec.workers, cost)

    while True:
        value = pairwise_sum(vals)
        err = pairwise_sum(errs) + truncation_bound
        result = IntegralResult(value, err, int(vals.size), truncation_bound)
        if err <= max(spec.abs_tol, spec.rel_tol * abs(value)):
            return result
        if vals.size >= spec.max_subdivisions:
            raise ConvergenceError(
                f"tolerance not reached with {vals.size} cells (error {err:.3e})", result
            )
        if truncation_bound > max(spec.abs_tol, spec.rel_tol * abs(value)):
            raise ConvergenceError("truncation tail alone exceeds the tolerance", result)
        # refine the largest-error cells carrying half of the total error
        order = np.lexsort((np.arange(errs.size), -errs))
        csum = np.cumsum(errs[order])
        nsel = int(np.searchsorted(csum, 0.5 * csum[-1])) + 1
        nsel = min(nsel, max(1, (spec.max_subdivisions - vals.size)))
        sel = np.zeros(errs.size, dtype=bool)
        sel[order[:nsel]] = True
        nlo, nhi = _bisect(clo[sel], chi[sel], geom)
        nv, ne = _eval_cells(g, nlo, nhi, rules, spec.workers, cost)
        keep = ~sel
        clo = np.concatenate([clo[keep], nlo])
        chi = np.concatenate([chi[keep], nhi])
        vals = np.concatenate([vals[keep], nv])
        errs = np.concatenate([errs[keep], ne])


# --------------------------------------------------------------------------
# truncation


def _probe_directions(N: int, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, N))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    # include the coordinate axes so symmetric peaks are not missed
    return np.concatenate([v, np.eye(N), -np.eye(N)])


def tail_bound(f: Integrand, N: int, p: float, R: float, seed: int = 0) -> tuple[float, float]:
    """(C, bound): |f| <= C |y|^{-p} fitted on |y| in {R, 2R}; bound on int_{|y|>R}|f|."""
    dirs = _probe_directions(N, 256, seed)
    C = 0.0
    for rad in (R, 2 * R):
        vals = np.abs(np.asarray(f(rad * dirs), dtype=float))
        C = max(C, float(np.max(vals)) * rad**p)
    C *= 2.0
    return C, C * sphere_area(N - 1) * R ** (N - p) / (p - N)


def _truncation(f, N, spec, decay, features) -> tuple[float, float]:
    pts = [np.asarray(c, dtype=float) for c, _ in features]
    far = max([float(np.linalg.norm(c)) for c in pts] + [0.0])
    sc = max([float(s) for _, s in features] + [1.0])
    R1 = 2.0 * far + 20.0 * sc
    if spec.truncation_radius != "auto":
        R = float(spec.truncation_radius)
        if decay is None or decay <= N:
            return R, 0.0
        return R, tail_bound(f, N, decay, R, spec.seed)[1]
    if decay is None:
        raise InvalidSpecError("auto truncation needs a declared decay exponent")
    if decay <= N:
        raise InvalidSpecError(f"decay exponent {decay} <= N = {N}: tail not integrable")
    C, _ = tail_bound(f, N, decay, R1, spec.seed)
    target = spec.abs_tol / 10.0
    R = R1
    if C > 0:
        R = max(R1, (C * sphere_area(N - 1) / ((decay - N) * target)) ** (1.0 / (decay - N)))
        C, _ = tail_bound(f, N, decay, R, spec.seed)
        R = max(R, (C * sphere_area(N - 1) / ((decay - N) * target)) ** (1.0 / (decay - N)))
    bound = C * sphere_area(N - 1) * R ** (N - decay) / (decay - N)
    return R, bound


# --------------------------------------------------------------------------
# public volume integrator


def _cylinder_frame(N, plane):
    a, b = plane[0] - 1, plane[1] - 1
    rest = [i for i in range(N) if i not in (a, b)]
    return a, b, rest


def integrate_volume(
    f: Integrand,
    spec: QuadratureSpec,
    symmetry: Optional[SymmetryGroup] = None,
    *,
    dim: Optional[int] = None,
    decay: Optional[float] = None,
    features: Sequence[tuple[Sequence[float], float]] = (),
    plane: Optional[tuple[int, int]] = None,
    center: Optional[Sequence[float]] = None,
) -> IntegralResult:
    """Integral of ``f`` over R^N.

    ``decay`` is the exponent p in |f(y)| <= C|y|^{-p}; ``features`` is a list
    of (point, length scale) pairs where the integrand is sharply peaked.
    ``cylinder-3d`` uses the rotation of ``symmetry`` in ``plane`` (default:
    the group's first rotation plane, or (1, 2) with no group).
    """
    N = dim if dim is not None else getattr(f, "dim", None)
    if N is None:
        if features:
            N = len(features[0][0])
        elif symmetry is not None:
            N = symmetry.dim
        else:
            raise InvalidSpecError("integrate_volume needs the dimension")
    features = [(np.asarray(c, dtype=float), float(s)) for c, s in features]
    R, tbound = _truncation(f, N, spec, decay, features)

    if spec.mode == "full-Nd":
        geom = _Geometry(np.array([c for c, _ in features]).reshape(-1, N),
                         np.array([s for _, s in features]))
        return adaptive_cubature(f, -R * np.ones(N), R * np.ones(N), spec, geom, tbound)

    if spec.mode == "radial-1d":
        c0 = np.zeros(N) if center is None else np.asarray(center, dtype=float)
        e1 = np.zeros(N)
        e1[0] = 1.0
        om = sphere_area(N - 1)

        def g(r):
            r = r[:, 0]
            return om * r ** (N - 1) * f(c0[None, :] + r[:, None] * e1[None, :])

        pts = np.array([[np.linalg.norm(c - c0)] for c, _ in features]).reshape(-1, 1)
        geom = _Geometry(pts, np.array([s for _, s in features]))
        Rr = R + float(np.linalg.norm(c0))
        return adaptive_cubature(g, [0.0], [Rr], spec, geom, tbound)

    # cylinder-3d
    k, reflect = 1, False
    if symmetry is not None:
        rots = dict((tuple(p), o) for o, p in symmetry.rotations)
        if plane is None:
            plane = tuple(symmetry.rotations[0][1]) if symmetry.rotations else (1, 2)
        k = rots.get(tuple(plane), 1)
        reflect = plane[1] in symmetry.reflections
    plane = plane or (1, 2)
    if N < 4:
        raise InvalidSpecError("cylinder-3d needs N >= 4")
    a, b, rest = _cylinder_frame(N, plane)
    theta_max = math.pi / k if reflect else 2 * math.pi / k
    mult = 2 * k if reflect else k
    om = sphere_area(N - 3)
    c_axis = rest[0]

    def gc(z):
        s, th, t = z[:, 0], z[:, 1], z[:, 2]
        y = np.zeros((z.shape[0], N))
        y[:, a] = s * np.cos(th)
        y[:, b] = s * np.sin(th)
        y[:, c_axis] = t
        return mult * om * s * t ** (N - 3) * f(y)

    fpts, fsc = [], []
    for c, sc in features:
        s_f = math.hypot(c[a], c[b])
        th_f = math.atan2(c[b], c[a])
        t_f = float(np.linalg.norm(c[rest]))
        for j in range(k):
            for sgn in ((1, -1) if reflect else (1,)):
                th = sgn * th_f + 2 * math.pi * j / k
                th = (th + math.pi) % (2 * math.pi) - math.pi
                for shift in (-2 * math.pi, 0.0, 2 * math.pi):
                    if -theta_max <= th + shift <= 2 * theta_max:
                        fpts.append((s_f, th + shift, t_f))
                        fsc.append(sc)
    geom = _CylinderGeometry(np.array(fpts).reshape(-1, 3), np.array(fsc))
    return adaptive_cubature(gc, [0.0, 0.0, 0.0], [R, theta_max, R], spec, geom, tbound)


# --------------------------------------------------------------------------
# spheres and balls


@lru_cache(maxsize=None)
def sphere_rule(N: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Product rule on S^{N-1}: Gauss-Jacobi in the polar angles, trapezoid in azimuth.

    Returns unit vectors ``(P, N)`` and weights summing to |S^{N-1}|.
    """
    if N < 2:
        raise InvalidSpecError("sphere rule needs N >= 2")
    naz = 2 * m
    phi = 2 * math.pi * np.arange(naz) / naz
    pts = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    w = np.full(naz, 2 * math.pi / naz)
    # add polar angles from the innermost (exponent 1) outwards
    for e in range(1, N - 1):
        alpha = 0.5 * (e - 1)
        u, wu = roots_jacobi(m, alpha, alpha)
        sn = np.sqrt(1.0 - u * u)
        pts = np.concatenate(
            [np.repeat(u, pts.shape[0])[:, None], (sn[:, None, None] * pts[None]).reshape(-1, pts.shape[1])],
            axis=1,
        )
        w = (wu[:, None] * w[None]).ravel()
    return pts, w


def _householder(axis: Optional[Sequence[float]], N: int) -> Optional[np.ndarray]:
    if axis is None:
        return None
    a = np.asarray(axis, dtype=float)
    nrm = np.linalg.norm(a)
    if nrm == 0:
        return None
    a = a / nrm
    v = -a.copy()
    v[0] += 1.0
    vv = v @ v
    if vv < 1e-300:
        return None
    return np.eye(N) - 2.0 * np.outer(v, v) / vv


def _sphere_points(N, m, H):
    pts, w = sphere_rule(N, m)
    if H is not None:
        pts = pts @ H
    return pts, w


_SPHERE_POINT_CAP = 2_000_000


def _sphere_adaptive(f, center, radius, spec, axis, m0=4):
    N = center.size
    H = _householder(axis, N)
    scale = radius ** (N - 1)

    def Q(m):
        pts, w = _sphere_points(N, m, H)
        vals = np.asarray(f(center[None, :] + radius * pts), dtype=float)
        # rounding floor: cancellation in integrands that vanish on the sphere
        floor = 64 * np.finfo(float).eps * scale * float(np.sum(np.abs(vals) * w))
        return scale * pairwise_sum(vals * w), floor

    m = m0
    prev, _ = Q(m)
    while True:
        # growth 3/2 keeps the last affordable order within reach of the cap
        m2 = max(m + 2, (3 * m) // 2)
        if m2 ** (N - 2) * 2 * m2 > _SPHERE_POINT_CAP:
            return None, m
        cur, floor = Q(m2)
        err = abs(cur - prev)
        if err <= max(spec.abs_tol, spec.rel_tol * abs(cur), floor):
            return IntegralResult(cur, max(err, floor), m2 ** (N - 2) * 2 * m2, 0.0), m2
        prev, m = cur, m2


def _sphere_random(f, center, radius, spec, pairs):
    N = center.size
    rng = np.random.default_rng(spec.seed)
    v = rng.standard_normal((pairs, N))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    fa = np.asarray(f(center[None, :] + radius * v), dtype=float)
    fb = np.asarray(f(center[None, :] - radius * v), dtype=float)
    pair = 0.5 * (fa + fb)
    area = sphere_area(N - 1) * radius ** (N - 1)
    mean = pairwise_sum(pair) / pairs
    sd = float(np.std(pair, ddof=1)) if pairs > 1 else float("inf")
    return IntegralResult(area * mean, 3.0 * area * sd / math.sqrt(pairs), 2 * pairs, 0.0)


def integrate_sphere(
    f: Integrand,
    center: Sequence[float],
    radius: float,
    spec: QuadratureSpec,
    *,
    axis: Optional[Sequence[float]] = None,
    method: str = "product",
    pairs: int = 200_000,
) -> IntegralResult:
    """Surface integral of ``f`` over the sphere |y - center| = radius.

    ``product`` raises the angular order until two successive rules agree;
    past the point cap (or with ``method='random'``) an antithetic Monte Carlo
    estimate with a 3-sigma CLT error bar is used.  ``axis`` aligns the pole
    of the product rule (useful when f is nearly axisymmetric about it).
    """
    center = np.asarray(center, dtype=float)
    if not radius > 0:
        raise InvalidSpecError("radius must be positive")
    if method == "product":
        res, _ = _sphere_adaptive(f, center, radius, spec, axis)
        if res is not None:
            return res
    elif method != "random":
        raise InvalidSpecError(f"unknown sphere method {method!r}")
    res = _sphere_random(f, center, radius, spec, pairs)
    if method == "product" and res.error_estimate > max(spec.abs_tol, spec.rel_tol * abs(res.value)):
        raise ConvergenceError("sphere rule did not converge; random fallback too noisy", res)
    return res


def integrate_ball(
    f: Integrand,
    center: Sequence[float],
    radius: float,
    spec: QuadratureSpec,
    *,
    axis: Optional[Sequence[float]] = None,
    features: Sequence[tuple[Sequence[float], float]] = (),
) -> IntegralResult:
    """Volume integral over the ball |y - center| < radius.

    Radial adaptive Gauss in r times the sphere product rule, whose order is
    fixed by the order test on a few representative spheres.
    """
    center = np.asarray(center, dtype=float)
    N = center.size
    H = _householder(axis, N)
    probe_r = {radius * 0.5**j for j in range(11)}
    for c, sc in features:
        dist = float(np.linalg.norm(np.asarray(c, dtype=float) - center))
        if dist < radius:
            probe_r.update({max(dist, 1e-3 * radius), min(radius, dist + sc)})
    # probes where f nearly vanishes are judged against the largest sphere mass
    p4, w4 = _sphere_points(N, 4, H)
    mass = max(r ** (N - 1) * float(np.sum(np.abs(np.asarray(f(center + r * p4), dtype=float)) * w4))
               for r in probe_r)
    probe_tol = max(spec.abs_tol / radius**N, 1e3 * np.finfo(float).eps * mass)
    m = 4
    for r in sorted(probe_r):
        res, mr = _sphere_adaptive(f, center, r, spec.with_(abs_tol=probe_tol), axis)
        if res is None:
            raise ConvergenceError(f"sphere rule did not converge at radius {r}")
        m = max(m, mr)
    pts, w = _sphere_points(N, m, H)
    P = pts.shape[0]

    def g(r):
        r = r[:, 0]
        y = center[None, None, :] + r[:, None, None] * pts[None, :, :]
        vals = np.asarray(f(y.reshape(-1, N)), dtype=float).reshape(r.size, P)
        return r ** (N - 1) * np.sum(vals * w[None, :], axis=1)

    fr = np.array([[float(np.linalg.norm(np.asarray(c, dtype=float) - center))] for c, _ in features]).reshape(-1, 1)
    geom = _Geometry(fr, np.array([s for _, s in features]))
    return adaptive_cubature(g, [0.0], [radius], spec, geom, 0.0, cost=P)


def integrate_ball_axisymmetric(
    f: Integrand,
    center: Sequence[float],
    radius: float,
    spec: QuadratureSpec,
    *,
    axis: Sequence[float],
    features: Sequence[tuple[Sequence[float], float]] = (),
) -> IntegralResult:
    """Ball integral of a field invariant under rotations fixing ``axis``.

    Reduces to the half-disc (r, phi) with weight |S^{N-2}| r^{N-1} sin^{N-2} phi;
    f is sampled on one meridian plane.
    """
    center = np.asarray(center, dtype=float)
    N = center.size
    e = np.asarray(axis, dtype=float)
    e = e / np.linalg.norm(e)
    # any unit vector orthogonal to the axis spans the meridian
    q, _ = np.linalg.qr(np.column_stack([e, np.eye(N)]))
    perp = q[:, 1]
    om = sphere_area(N - 2)

    def g(z):
        r, ph = z[:, 0], z[:, 1]
        y = center[None, :] + (r * np.cos(ph))[:, None] * e[None, :] + (r * np.sin(ph))[:, None] * perp[None, :]
        return om * r ** (N - 1) * np.sin(ph) ** (N - 2) * np.asarray(f(y), dtype=float)

    fp, fs = [], []
    for c, sc in features:
        v = np.asarray(c, dtype=float) - center
        d = float(np.linalg.norm(v))
        ph = math.acos(max(-1.0, min(1.0, float(v @ e) / d))) if d > 0 else 0.0
        fp.append((d, ph))
        fs.append(sc)
    geom = _Geometry(np.array(fp).reshape(-1, 2), np.array(fs))
    return adaptive_cubature(g, [0.0, 0.0], [radius, math.pi], spec, geom, 0.0)
