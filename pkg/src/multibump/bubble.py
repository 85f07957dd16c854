"""Aubin-Talenti bubbles, their derivative kernels, towers and moments.

    U_{x,mu}(y) = c_N mu^{(N-2)/2} / (1 + mu^2 |y-x|^2)^{(N-2)/2},
    c_N = (N(N-2))^{(N-2)/4}.

Every field object exposes ``value``, ``grad`` and ``laplacian`` taking an
``(M, N)`` array of points (a single point is promoted) and returning
``(M,)`` / ``(M, N)`` / ``(M,)`` arrays.  All derivatives are closed forms.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from .errors import DivergenceError, InvalidConfigError, MissingContextError
from .symmetry import PolygonConfig, build_polygon


def critical_exponent(N: int) -> float:
    """2* = 2N/(N-2)."""
    return 2.0 * N / (N - 2)


def c_N(N: int) -> float:
    return math.exp((N - 2) / 4.0 * math.log(N * (N - 2)))


def sphere_area(m: int) -> float:
    """Area of the unit sphere S^m in R^{m+1}."""
    return 2.0 * math.exp(0.5 * (m + 1) * math.log(math.pi) - math.lgamma(0.5 * (m + 1)))


def _points(y, N: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[None, :]
    if y.shape[-1] != N:
        raise InvalidConfigError(f"expected points in R^{N}, got shape {y.shape}")
    return y


@dataclass(frozen=True, eq=False)
class Bubble:
    center: np.ndarray
    scale: float
    dim: int
    parent: Optional[PolygonConfig] = None
    index: Optional[int] = None

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(-1)
        if c.shape[0] != self.dim:
            raise InvalidConfigError("center dimension does not match dim")
        if not self.scale > 0:
            raise InvalidConfigError("bubble scale must be positive")
        if self.dim < 3:
            raise InvalidConfigError("dim must be >= 3")
        object.__setattr__(self, "center", c)

    @property
    def cN(self) -> float:
        return c_N(self.dim)

    def _z(self, y):
        y = _points(y, self.dim)
        z = y - self.center
        s = 1.0 + self.scale**2 * np.einsum("ij,ij->i", z, z)
        return z, s

    def value(self, y) -> np.ndarray:
        N, mu = self.dim, self.scale
        _, s = self._z(y)
        return self.cN * mu ** ((N - 2) / 2) * s ** (-(N - 2) / 2)

    def grad(self, y) -> np.ndarray:
        N, mu = self.dim, self.scale
        z, s = self._z(y)
        coef = -(N - 2) * self.cN * mu ** ((N + 2) / 2) * s ** (-N / 2)
        return coef[:, None] * z

    def laplacian(self, y) -> np.ndarray:
        N, mu = self.dim, self.scale
        _, s = self._z(y)
        return -N * (N - 2) * self.cN * mu ** ((N + 2) / 2) * s ** (-(N + 2) / 2)

    def hessian(self, y) -> np.ndarray:
        N, mu = self.dim, self.scale
        z, s = self._z(y)
        C = self.cN * mu ** ((N - 2) / 2)
        a = -(N - 2) * C * mu**2 * s ** (-N / 2)
        b = (N - 2) * N * C * mu**4 * s ** (-N / 2 - 1)
        return a[:, None, None] * np.eye(N)[None] + b[:, None, None] * z[:, :, None] * z[:, None, :]

    def d_scale(self, y) -> np.ndarray:
        """dU/dmu."""
        N, mu = self.dim, self.scale
        z, s = self._z(y)
        r2 = mu**2 * np.einsum("ij,ij->i", z, z)
        return 0.5 * (N - 2) * self.cN * mu ** ((N - 4) / 2) * (1.0 - r2) * s ** (-N / 2)

    def d_scale_grad(self, y) -> np.ndarray:
        N, mu = self.dim, self.scale
        z, s = self._z(y)
        r2 = mu**2 * np.einsum("ij,ij->i", z, z)
        coef = -(N - 2) * self.cN * mu ** (N / 2) * s ** (-(N + 2) / 2) * (0.5 * (N + 2) - 0.5 * (N - 2) * r2)
        return coef[:, None] * z

    def d_scale_laplacian(self, y) -> np.ndarray:
        N, mu = self.dim, self.scale
        z, s = self._z(y)
        r2 = mu**2 * np.einsum("ij,ij->i", z, z)
        return -0.5 * N * (N - 2) * (N + 2) * self.cN * mu ** (N / 2) * (1.0 - r2) * s ** (-(N + 4) / 2)

    def grad_laplacian(self, y) -> np.ndarray:
        """Gradient of the Laplacian, i.e. the Laplacians of the psi_i."""
        N, mu = self.dim, self.scale
        z, s = self._z(y)
        coef = N * (N - 2) * (N + 2) * self.cN * mu ** ((N + 6) / 2) * s ** (-(N + 4) / 2)
        return coef[:, None] * z

    def radial_direction(self) -> np.ndarray:
        if self.parent is None or self.index is None:
            raise MissingContextError("radial derivative needs a parent PolygonConfig")
        return self.parent.unit(self.index)


def eval_bubble(b: Bubble, y) -> np.ndarray:
    return b.value(y)


def eval_grad(b: Bubble, y) -> np.ndarray:
    return b.grad(y)


def eval_laplacian(b: Bubble, y) -> np.ndarray:
    return b.laplacian(y)


KERNEL_TAGS = ("psi0", "Z1", "Z2")


@dataclass(frozen=True, eq=False)
class Kernel:
    """A derivative kernel of a bubble.

    ``psi0``: dU/dmu; ``psi<i>`` (1-based): dU/dy_i; ``Z1``: derivative with
    respect to the polygon radius with the angle fixed (needs a parent
    config); ``Z2``: dU/dmu (same field as ``psi0``, kept for naming).
    """

    bubble: Bubble
    kind: str

    def __post_init__(self):
        k = self.kind
        if k in KERNEL_TAGS:
            if k == "Z1":
                self.bubble.radial_direction()
            return
        if k.startswith("psi") and k[3:].isdigit() and 1 <= int(k[3:]) <= self.bubble.dim:
            return
        raise InvalidConfigError(f"unknown kernel kind {k!r} for dim {self.bubble.dim}")

    def _direction(self) -> Optional[np.ndarray]:
        if self.kind in ("psi0", "Z2"):
            return None
        if self.kind == "Z1":
            # moving the centre outward: d/dt U(y - t e) = -e . grad_y U
            return -self.bubble.radial_direction()
        e = np.zeros(self.bubble.dim)
        e[int(self.kind[3:]) - 1] = 1.0
        return e

    def value(self, y) -> np.ndarray:
        e = self._direction()
        if e is None:
            return self.bubble.d_scale(y)
        return self.bubble.grad(y) @ e

    def grad(self, y) -> np.ndarray:
        e = self._direction()
        if e is None:
            return self.bubble.d_scale_grad(y)
        return self.bubble.hessian(y) @ e

    def laplacian(self, y) -> np.ndarray:
        e = self._direction()
        if e is None:
            return self.bubble.d_scale_laplacian(y)
        return self.bubble.grad_laplacian(y) @ e


def eval_kernel(b: Bubble, kind: str, y) -> np.ndarray:
    return Kernel(b, kind).value(y)


class Tower:
    """Sum of bubbles plus an optional background field.

    The background (any object with value/grad/laplacian) is how an outer
    configuration enters the glued computations.
    """

    def __init__(self, bubbles: Sequence[Bubble], background=None):
        bubbles = list(bubbles)
        dims = {b.dim for b in bubbles}
        if background is not None:
            dims.add(background.dim)
        if len(dims) > 1:
            raise InvalidConfigError("all bubbles must share dim")
        if not dims:
            raise InvalidConfigError("empty tower needs a background to fix dim")
        self.bubbles = bubbles
        self.background = background
        self.dim = dims.pop()

    @classmethod
    def from_polygon(cls, config: PolygonConfig, background=None) -> "Tower":
        pts = build_polygon(config)
        bs = [Bubble(p, config.scale, config.dim, config, j + 1) for j, p in enumerate(pts)]
        return cls(bs, background)

    @property
    def centers(self) -> np.ndarray:
        return np.array([b.center for b in self.bubbles]).reshape(-1, self.dim)

    def features(self) -> list[tuple[np.ndarray, float]]:
        """(center, length scale) pairs for quadrature mesh grading."""
        out = [(b.center, 1.0 / b.scale) for b in self.bubbles]
        if self.background is not None and hasattr(self.background, "features"):
            out += self.background.features()
        return out

    def _sum(self, attr: str, y) -> np.ndarray:
        y = _points(y, self.dim)
        acc = None
        for b in self.bubbles:
            v = getattr(b, attr)(y)
            acc = v if acc is None else acc + v
        if self.background is not None:
            v = getattr(self.background, attr)(y)
            acc = v if acc is None else acc + v
        return acc

    def value(self, y) -> np.ndarray:
        return self._sum("value", y)

    def grad(self, y) -> np.ndarray:
        return self._sum("grad", y)

    def laplacian(self, y) -> np.ndarray:
        return self._sum("laplacian", y)


def eval_tower(t: Tower, y) -> np.ndarray:
    return t.value(y)


class Combination:
    """Finite linear combination ``sum c_i f_i`` of field objects."""

    def __init__(self, terms: Sequence[tuple[float, object]]):
        self.terms = [(float(c), f) for c, f in terms]
        self.dim = self.terms[0][1].dim if hasattr(self.terms[0][1], "dim") else self.terms[0][1].bubble.dim

    def _sum(self, attr, y):
        return sum(c * getattr(f, attr)(y) for c, f in self.terms)

    def value(self, y):
        return self._sum("value", y)

    def grad(self, y):
        return self._sum("grad", y)

    def laplacian(self, y):
        return self._sum("laplacian", y)


class FunctionField:
    """Wrap a plain callable; missing derivatives fall back to central differences."""

    def __init__(self, f: Callable, dim: int, grad: Callable | None = None,
                 laplacian: Callable | None = None, h: float = 1e-4):
        self.f, self.dim, self._grad, self._lap, self.h = f, dim, grad, laplacian, h

    def value(self, y):
        return self.f(_points(y, self.dim))

    def grad(self, y):
        y = _points(y, self.dim)
        if self._grad is not None:
            return self._grad(y)
        g = np.empty_like(y)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = self.h
            g[:, i] = (self.f(y + e) - self.f(y - e)) / (2 * self.h)
        return g

    def laplacian(self, y):
        y = _points(y, self.dim)
        if self._lap is not None:
            return self._lap(y)
        f0 = self.f(y)
        acc = np.zeros(y.shape[0])
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = self.h
            acc += self.f(y + e) - 2 * f0 + self.f(y - e)
        return acc / self.h**2


# --------------------------------------------------------------------------
# moments


def radial_moment(N: int, a: float, b: float, R: float | None = None) -> float:
    """``int_{|y|<R} (1+|y|^2)^{-a} |y|^b dy`` (R=None: all of R^N)."""
    p = 0.5 * (N + b)
    q = a - p
    if q <= 0:
        raise DivergenceError(f"moment I({a}, {b}) diverges in R^{N} (needs 2a - b > N)")
    if p <= 0:
        raise DivergenceError(f"moment I({a}, {b}) diverges at the origin")
    val = 0.5 * sphere_area(N - 1) * math.exp(special.betaln(p, q))
    if R is None:
        return val
    x = R * R / (1.0 + R * R)
    return val * float(special.betainc(p, q, x))


@dataclass(frozen=True)
class MomentTable:
    """Closed-form integrals of the standard bubble U = U_{0,1} in R^N."""

    dim: int
    omega: float
    c_N: float
    two_star: float
    A_mass: float
    S_mass: float
    M2: float
    B_flux: float
    psi0_moment: float
    energy: float
    A_mass_identity: float = field(default=0.0)

    def I(self, a: float, b: float, R: float | None = None) -> float:
        return radial_moment(self.dim, a, b, R)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MomentTable":
        return cls(**json.loads(text))


def closed_moments(N: int) -> MomentTable:
    """Beta-function closed forms for the bubble moments.

    A_mass = int U^{2*-1}, S_mass = int U^{2*}, M2 = int U^{2*}|y|^2,
    B_flux = (2*-1) int U^{2*-2} psi_0, psi0_moment = int U^{2*-1} psi_0 |y|^2.
    """
    if N < 5:
        raise InvalidConfigError("closed_moments needs N >= 5")
    c = c_N(N)
    om = sphere_area(N - 1)
    ts = critical_exponent(N)
    I = lambda a, b: radial_moment(N, a, b)
    # c^{4/(N-2)} = N(N-2)
    cpow = N * (N - 2)
    A = c * cpow * I((N + 2) / 2, 0)
    S = c * c * cpow * I(N, 0)
    M2 = c * c * cpow * I(N, 2)
    B = (ts - 1) * cpow * 0.5 * (N - 2) * c * (I((N + 4) / 2, 0) - I((N + 4) / 2, 2))
    P = c * cpow * 0.5 * (N - 2) * c * (I(N + 1, 2) - I(N + 1, 4))
    return MomentTable(
        dim=N, omega=om, c_N=c, two_star=ts, A_mass=A, S_mass=S, M2=M2,
        B_flux=B, psi0_moment=P, energy=S / N, A_mass_identity=(N - 2) * om * c,
    )


def closed_moments_mp(N: int, dps: int = 40) -> dict[str, str]:
    """Same table in mpmath at ``dps`` digits (returned as decimal strings)."""
    import mpmath as mp

    with mp.workdps(dps):
        N_ = mp.mpf(N)
        c = (N_ * (N_ - 2)) ** ((N_ - 2) / 4)
        om = 2 * mp.pi ** (N_ / 2) / mp.gamma(N_ / 2)
        ts = 2 * N_ / (N_ - 2)

        def I(a, b):
            p = (N_ + b) / 2
            return om / 2 * mp.beta(p, a - p)

        cpow = N_ * (N_ - 2)
        vals = {
            "A_mass": c * cpow * I((N_ + 2) / 2, 0),
            "S_mass": c * c * cpow * I(N_, 0),
            "M2": c * c * cpow * I(N_, 2),
            "B_flux": (ts - 1) * cpow * (N_ - 2) / 2 * c * (I((N_ + 4) / 2, 0) - I((N_ + 4) / 2, 2)),
            "psi0_moment": c * cpow * (N_ - 2) / 2 * c * (I(N_ + 1, 2) - I(N_ + 1, 4)),
            "omega": om,
            "c_N": c,
        }
        return {k: mp.nstr(v, dps - 2) for k, v in vals.items()}
