"""Radial weights K(|y|) with derivatives, and the rescaled K_k(y) = K(|y|/k).

Built-in forms:

* ``constant-one``: K = 1.
* ``quadratic-bump``: K(r) = 1 - c0 s^2 exp(-s^2), s = r - r0.  It satisfies
  K(r0) = 1, K'(r0) = 0, K''(r0) = -2 c0 and stays above 1 - c0/e > 0
  because s^2 e^{-s^2} <= 1/e.
* ``user-table``: monotone cubic (PCHIP) interpolation of CSV samples.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import InvalidConfigError, SingularGradientError

FORMS = ("constant-one", "quadratic-bump", "user-table")


@dataclass(frozen=True, eq=False)
class PotentialK:
    form: str = "quadratic-bump"
    r0: float = 1.0
    c0: float = 1.0
    rescale: float = 1.0
    table: Optional[tuple[np.ndarray, np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.form not in FORMS:
            raise InvalidConfigError(f"unknown potential form {self.form!r}")
        if not (self.r0 > 0 and self.c0 > 0 and self.rescale > 0):
            raise InvalidConfigError("r0, c0 and rescale must be positive")
        if self.form == "quadratic-bump" and not self.c0 < math.e:
            raise InvalidConfigError("quadratic-bump needs c0 < e to stay positive")
        if self.form == "user-table":
            if self.table is None:
                raise InvalidConfigError("user-table form needs samples")
            r, k = (np.asarray(a, dtype=float) for a in self.table)
            if r.ndim != 1 or r.shape != k.shape or r.size < 2:
                raise InvalidConfigError("table needs two equal-length columns with >= 2 rows")
            if np.any(np.diff(r) <= 0) or r[0] < 0:
                raise InvalidConfigError("table radii must be nonnegative and strictly increasing")
            if np.any(k <= 0):
                raise InvalidConfigError("table values must be positive")
            spline = PchipInterpolator(r, k, extrapolate=False)
            object.__setattr__(self, "_spline", spline)
            object.__setattr__(self, "_derivs", [spline.derivative(m) for m in (1, 2, 3)])

    # -- construction helpers
    @classmethod
    def constant_one(cls) -> "PotentialK":
        return cls(form="constant-one")

    @classmethod
    def from_csv(cls, path: str | Path) -> "PotentialK":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [h.strip() for h in reader.fieldnames][:2] != ["r", "K"]:
                raise InvalidConfigError("CSV potential needs a header row 'r,K'")
            rows = [(float(row["r"]), float(row["K"])) for row in reader]
        arr = np.array(rows, dtype=float)
        return cls(form="user-table", table=(arr[:, 0], arr[:, 1]))

    def rescaled(self, k: float) -> "PotentialK":
        """K_k(y) = K(|y|/k) (composes with any existing rescale)."""
        return PotentialK(self.form, self.r0, self.c0, self.rescale * k, self.table)

    @property
    def K_min(self) -> float:
        if self.form == "constant-one":
            return 1.0
        if self.form == "quadratic-bump":
            return 1.0 - self.c0 / math.e
        return float(np.min(self.table[1]))

    # -- radial profile of the unscaled K; order m derivative
    def _profile(self, r: np.ndarray, m: int) -> np.ndarray:
        if self.form == "constant-one":
            return np.ones_like(r) if m == 0 else np.zeros_like(r)
        if self.form == "user-table":
            lo, hi = self.table[0][0], self.table[0][-1]
            rc = np.clip(r, lo, hi)
            out = self._spline(rc) if m == 0 else self._derivs[m - 1](rc)
            # constant continuation outside the sampled range
            if m > 0:
                out = np.where((r < lo) | (r > hi), 0.0, out)
            return np.asarray(out, dtype=float)
        s = r - self.r0
        s2 = s * s
        g = np.exp(-s2)
        c = self.c0
        if m == 0:
            return 1.0 - c * s2 * g
        if m == 1:
            return -2 * c * s * (1 - s2) * g
        if m == 2:
            return -2 * c * (1 - 5 * s2 + 2 * s2 * s2) * g
        if m == 3:
            return -2 * c * s * (-12 + 18 * s2 - 4 * s2 * s2) * g
        raise ValueError("derivative order must be 0..3")

    def derivative(self, r, m: int = 1) -> np.ndarray:
        """d^m/dr^m of the (possibly rescaled) radial profile."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise InvalidConfigError("radius must be nonnegative")
        return self._profile(r / self.rescale, m) / self.rescale**m

    def features(self) -> list:
        return []


def eval_K(p: PotentialK, r) -> np.ndarray:
    return p.derivative(r, 0)


def eval_K_prime(p: PotentialK, r, order: int = 1) -> np.ndarray:
    return p.derivative(r, order)


def _y(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return y[None, :] if y.ndim == 1 else y


def K_of_y(p: PotentialK, y) -> np.ndarray:
    y = _y(y)
    return p.derivative(np.linalg.norm(y, axis=1), 0)


def grad_K(p: PotentialK, y) -> np.ndarray:
    """K'(|y|) y/|y|; at y = 0 this needs K'(0) = 0."""
    y = _y(y)
    r = np.linalg.norm(y, axis=1)
    d1 = p.derivative(r, 1)
    zero = r == 0
    if np.any(zero & (np.abs(d1) > 1e-14)):
        raise SingularGradientError("K'(0) != 0: gradient of K(|y|) undefined at the origin")
    safe = np.where(zero, 1.0, r)
    return (np.where(zero, 0.0, d1 / safe))[:, None] * y


def laplacian_K(p: PotentialK, y) -> np.ndarray:
    """K''(r) + (N-1) K'(r)/r; at r = 0 the limit N K''(0) (needs K'(0) = 0)."""
    y = _y(y)
    N = y.shape[1]
    r = np.linalg.norm(y, axis=1)
    d1 = p.derivative(r, 1)
    d2 = p.derivative(r, 2)
    zero = r == 0
    if np.any(zero & (np.abs(d1) > 1e-14)):
        raise SingularGradientError("K'(0) != 0: Laplacian of K(|y|) singular at the origin")
    safe = np.where(zero, 1.0, r)
    return np.where(zero, N * d2, d2 + (N - 1) * d1 / safe)


def fit_cubic_remainder(p: PotentialK, delta: float = 0.2, samples: int = 201) -> float:
    """Smallest C with |K(r) - K(r0) + c0 (r-r0)^2| <= C |r-r0|^3 on the sample grid."""
    s = np.linspace(-delta, delta, samples)
    s = s[s != 0]
    r = p.r0 * p.rescale + s
    rem = np.abs(eval_K(p, r) - eval_K(p, p.r0 * p.rescale) + p.c0 * s**2 / p.rescale**2)
    return float(np.max(rem / np.abs(s) ** 3))
