"""Center-anchored weighted sup norms and their estimation from below.

    star:         w(y) = sum_j mu^{(N-2)/2} / (1 + mu|y - x_j|)^{(N-2)/2 + tau}
    double-star:  w(y) = sum_j mu^{(N+2)/2} / (1 + mu|y - x_j|)^{(N+2)/2 + tau}

``||f|| = sup |f| / w`` is not computable exactly; ``weighted_sup_norm``
returns the best value found by multi-start local maximisation, which is a
certified lower bound, plus a convergence flag comparing budgets b/2 and b.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import InvalidConfigError

KINDS = ("star", "double-star")


def tau_outer(N: int, sigma_bar: float = 0.01) -> float:
    """Exponent shift (N-4)/(N-2) + sigma_bar of the outer-tower norm."""
    return (N - 4) / (N - 2) + sigma_bar


def tau_inner(N: int) -> float:
    """Exponent shift (N-4)/(N-2) of the inner-ring norms."""
    return (N - 4) / (N - 2)


@dataclass(frozen=True, eq=False)
class WeightSpec:
    centers: np.ndarray
    scale: float
    tau: float
    kind: str = "star"
    dim: int = 5
    power: Optional[float] = None  # overrides the decay exponent

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float).reshape(-1, self.dim)
        object.__setattr__(self, "centers", c)
        if self.kind not in KINDS:
            raise InvalidConfigError(f"unknown weight kind {self.kind!r}")
        if not self.scale > 0:
            raise InvalidConfigError("weight scale must be positive")
        if not 0 < self.tau < (self.dim - 2) / 2:
            raise InvalidConfigError("tau must lie in (0, (N-2)/2)")
        if c.shape[0] == 0:
            raise InvalidConfigError("weight needs at least one center")

    @property
    def prefactor_power(self) -> float:
        N = self.dim
        return (N - 2) / 2 if self.kind == "star" else (N + 2) / 2

    @property
    def exponent(self) -> float:
        if self.power is not None:
            return self.power
        return self.prefactor_power + self.tau


def weight_value(spec: WeightSpec, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    y = y[None, :] if y.ndim == 1 else y
    mu = spec.scale
    acc = np.zeros(y.shape[0])
    for c in spec.centers:
        d = np.linalg.norm(y - c, axis=1)
        acc += (1.0 + mu * d) ** (-spec.exponent)
    return mu**spec.prefactor_power * acc


@dataclass
class NormEstimate:
    value: float
    argmax: np.ndarray
    converged: bool
    budget: int
    history: list = field(default_factory=list)  # (budget, value) pairs

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "argmax": [float(v) for v in self.argmax],
            "converged": self.converged,
            "budget": self.budget,
            "history": [[int(b), float(v)] for b, v in self.history],
        }


def start_points(spec: WeightSpec, budget: int, seed: int = 0,
                 extra: Sequence[Sequence[float]] = ()) -> np.ndarray:
    """Deterministic start sequence; the first b entries do not depend on budget.

    Order: extra points, centers, pairwise midpoints and quarter points,
    far-field ring, then seeded random points around the centers.
    """
    N = spec.dim
    C = spec.centers
    pts = [np.asarray(p, dtype=float) for p in extra]
    pts += list(C)
    # nudged centers avoid sitting on symmetric saddles of |f|/w
    pts += list(C + 0.5 / spec.scale * np.eye(N)[0])
    for i in range(len(C)):
        for j in range(i + 1, len(C)):
            for a in (0.5, 0.25, 0.75):
                pts.append((1 - a) * C[i] + a * C[j])
    far = 2.0 * float(np.max(np.linalg.norm(C, axis=1))) + 10.0 / spec.scale
    for e in np.eye(N):
        pts += [far * e, -far * e]
    base = np.array(pts)
    need = budget - base.shape[0]
    if need > 0:
        rng = np.random.default_rng(seed)
        # generate in fixed blocks so prefixes are budget independent
        blocks = []
        while sum(b.shape[0] for b in blocks) < need:
            idx = rng.integers(0, len(C), 256)
            rad = np.exp(rng.uniform(math.log(0.1 / spec.scale), math.log(far), 256))
            dirs = rng.standard_normal((256, N))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            blocks.append(C[idx] + rad[:, None] * dirs)
        base = np.concatenate([base] + blocks)
    return base[:budget]


def _local_max(f, spec, y0, maxiter):
    """Maximise log|f| - log w from y0 with L-BFGS-B and vectorised gradients."""
    N = spec.dim
    h = 1e-6 * max(1.0, 1.0 / spec.scale)

    def obj(y):
        pts = np.concatenate([y[None, :], y[None, :] + h * np.eye(N), y[None, :] - h * np.eye(N)])
        v = np.log(np.abs(np.asarray(f(pts), dtype=float)) + 1e-300) - np.log(weight_value(spec, pts))
        g = (v[1:N + 1] - v[N + 1:]) / (2 * h)
        return -v[0], -g

    res = minimize(obj, y0, jac=True, method="L-BFGS-B", options={"maxiter": maxiter})
    y = res.x if np.all(np.isfinite(res.x)) else y0
    val = float(np.abs(f(y[None, :]))[0] / weight_value(spec, y)[0])
    v0 = float(np.abs(f(y0[None, :]))[0] / weight_value(spec, y0)[0])
    if not np.isfinite(val) or v0 > val:
        return v0, y0
    return val, y


def weighted_sup_norm(
    f: Callable[[np.ndarray], np.ndarray],
    spec: WeightSpec,
    budget: int = 64,
    *,
    rel_tol: float = 1e-3,
    seed: int = 0,
    extra_starts: Sequence[Sequence[float]] = (),
    maxiter: int = 200,
    workers: int = 1,
) -> NormEstimate:
    """Lower bound for sup |f|/w from ``budget`` local maximisations.

    The value at budget b is the best over the first b starts (lowest index
    wins ties), so it never decreases as the budget grows.  ``converged`` is
    true when the values at b/2 and b agree to ``rel_tol``.
    """
    starts = start_points(spec, budget, seed, extra_starts)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            found = list(ex.map(lambda s: _local_max(f, spec, s, maxiter), starts))
    else:
        found = [_local_max(f, spec, s, maxiter) for s in starts]
    vals = np.array([v for v, _ in found])
    best = np.maximum.accumulate(vals)
    history = []
    b = 1
    while b < budget:
        history.append((b, float(best[b - 1])))
        b *= 2
    history.append((budget, float(best[-1])))
    half = best[max(0, budget // 2 - 1)]
    top = float(best[-1])
    converged = abs(top - half) <= rel_tol * abs(top)
    i = int(np.argmax(vals))  # first index attaining the max
    return NormEstimate(top, found[i][1], bool(converged), budget, history)
