"""Polygon geometry, the discrete symmetry groups of H_s / X_s, and cells.

Axis indices in public signatures are 1-based (``plane=(1, 2)`` is the
y1-y2 plane); arrays are of course 0-based internally.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import AmbiguousMembershipError, InvalidConfigError

Field = Callable[[np.ndarray], np.ndarray]

# closed-inequality slack for points on a cell bisector
_CELL_EPS = 1e-12


@dataclass(frozen=True)
class PolygonConfig:
    """``count`` equal bubbles at the vertices of a regular polygon.

    The first vertex sits at ``radius * e_{plane[0]}``; the rest follow by
    rotations of ``2*pi/count`` in ``plane``.
    """

    count: int
    radius: float
    scale: float
    plane: tuple[int, int] = (1, 2)
    dim: int = 5

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 1:
            raise InvalidConfigError(f"count must be a positive integer, got {self.count}")
        if not self.radius > 0:
            raise InvalidConfigError(f"radius must be positive, got {self.radius}")
        if not self.scale > 0:
            raise InvalidConfigError(f"scale must be positive, got {self.scale}")
        if self.dim < 5:
            raise InvalidConfigError(f"dim must be >= 5, got {self.dim}")
        a, b = self.plane
        if a == b or not (1 <= a <= self.dim and 1 <= b <= self.dim):
            raise InvalidConfigError(f"invalid plane {self.plane} for dim {self.dim}")
        object.__setattr__(self, "count", int(self.count))
        object.__setattr__(self, "plane", (int(a), int(b)))

    def angle(self, j: int) -> float:
        """Polar angle of vertex ``j`` (1-based) inside the plane."""
        return 2.0 * math.pi * (j - 1) / self.count

    def unit(self, j: int) -> np.ndarray:
        a, b = self.plane
        e = np.zeros(self.dim)
        th = self.angle(j)
        e[a - 1] = math.cos(th)
        e[b - 1] = math.sin(th)
        return e

    def centers(self) -> np.ndarray:
        return build_polygon(self)


def build_polygon(config: PolygonConfig) -> np.ndarray:
    """Vertices ``x_j``, ``j = 1..count``, as a ``(count, dim)`` array."""
    a, b = config.plane
    th = 2.0 * np.pi * np.arange(config.count) / config.count
    pts = np.zeros((config.count, config.dim))
    pts[:, a - 1] = config.radius * np.cos(th)
    pts[:, b - 1] = config.radius * np.sin(th)
    return pts


class GroupElement(NamedTuple):
    """y -> R(rotations) S(flips) y.

    ``rotations[p]`` is the power of the generator of rotation plane ``p``;
    ``flips`` is the set of (1-based) coordinates whose sign is reversed.
    """

    rotations: tuple[int, ...]
    flips: frozenset


@dataclass(frozen=True)
class SymmetryGroup:
    """Finite group generated by planar rotations and coordinate reflections.

    ``rotations`` is a tuple of ``(order, plane)`` pairs with disjoint planes.
    Elements are kept as (rotation powers, sign set) and composed by table, so
    closure and identities are exact in integer arithmetic.
    """

    rotations: tuple[tuple[int, tuple[int, int]], ...]
    reflections: frozenset
    dim: int
    tag: str = "H_s"
    _elements: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        used: set[int] = set()
        for order, plane in self.rotations:
            if order < 1:
                raise InvalidConfigError("rotation order must be >= 1")
            if set(plane) & used or plane[0] == plane[1]:
                raise InvalidConfigError("rotation planes must be disjoint")
            used |= set(plane)
        if any(not 1 <= i <= self.dim for i in self.reflections):
            raise InvalidConfigError("reflection axis out of range")
        object.__setattr__(self, "reflections", frozenset(self.reflections))

    @classmethod
    def H_s(cls, k: int, dim: int) -> "SymmetryGroup":
        """k-fold rotations in (y1, y2) and evenness in y2..yN."""
        return cls(((k, (1, 2)),), frozenset(range(2, dim + 1)), dim, "H_s")

    @classmethod
    def X_s(cls, k: int, n: int, dim: int) -> "SymmetryGroup":
        """H_s plus evenness in y1 and n-fold rotations in (y3, y4)."""
        return cls(((k, (1, 2)), (n, (3, 4))), frozenset(range(1, dim + 1)), dim, "X_s")

    @property
    def identity(self) -> GroupElement:
        return GroupElement(tuple(0 for _ in self.rotations), frozenset())

    def A(self, j: int, which: int = 0) -> GroupElement:
        """Rotation by ``2*pi*j/order`` in rotation plane ``which``."""
        rot = [0] * len(self.rotations)
        order = self.rotations[which][0]
        rot[which] = j % order
        return GroupElement(tuple(rot), frozenset())

    def B(self, i: int) -> GroupElement:
        """Reflection y_i -> -y_i."""
        if i not in self.reflections:
            raise InvalidConfigError(f"B_{i} is not in this group")
        return GroupElement(self.identity.rotations, frozenset({i}))

    def _plane_sign(self, flips: frozenset, plane: tuple[int, int]) -> int:
        # S R^j = R^{eps j} S, eps = det of S restricted to the plane
        return -1 if len(flips & set(plane)) == 1 else 1

    def compose(self, g1: GroupElement, g2: GroupElement) -> GroupElement:
        """The element ``g1 o g2`` (apply g2 first)."""
        rot = tuple(
            (j1 + self._plane_sign(g1.flips, plane) * j2) % order
            for (order, plane), j1, j2 in zip(self.rotations, g1.rotations, g2.rotations)
        )
        return GroupElement(rot, g1.flips ^ g2.flips)

    def inverse(self, g: GroupElement) -> GroupElement:
        rot = tuple(
            (-self._plane_sign(g.flips, plane) * j) % order
            for (order, plane), j in zip(self.rotations, g.rotations)
        )
        return GroupElement(rot, g.flips)

    def elements(self) -> tuple[GroupElement, ...]:
        if not self._elements:
            axes = sorted(self.reflections)
            subsets = [
                frozenset(c)
                for r in range(len(axes) + 1)
                for c in itertools.combinations(axes, r)
            ]
            rots = itertools.product(*[range(order) for order, _ in self.rotations])
            els = tuple(GroupElement(tuple(r), s) for r in rots for s in subsets)
            object.__setattr__(self, "_elements", els)
        return self._elements

    def matrix(self, g: GroupElement) -> np.ndarray:
        """Orthogonal matrix of ``g``; used for checks, not for composition."""
        return apply_group_element(self, g, np.eye(self.dim)).T

    def generators(self) -> list[GroupElement]:
        gens = [self.A(1, w) for w in range(len(self.rotations))]
        gens += [self.B(i) for i in sorted(self.reflections)]
        return gens


def apply_group_element(group: SymmetryGroup, g: GroupElement, y: np.ndarray) -> np.ndarray:
    """Apply ``g`` to a point or to a stack of points (last axis = coordinates)."""
    y = np.array(y, dtype=float, copy=True)
    for i in g.flips:
        y[..., i - 1] = -y[..., i - 1]
    out = y.copy()
    for (order, (a, b)), j in zip(group.rotations, g.rotations):
        if j % order == 0:
            continue
        th = 2.0 * math.pi * j / order
        c, s = math.cos(th), math.sin(th)
        out[..., a - 1] = c * y[..., a - 1] - s * y[..., b - 1]
        out[..., b - 1] = s * y[..., a - 1] + c * y[..., b - 1]
    return out


def symmetrize(f: Field, group: SymmetryGroup) -> Field:
    """Average of ``f`` over every element of ``group``.

    The result is invariant under the group, linear in ``f`` and idempotent.
    ``f`` maps an ``(M, dim)`` array of points to ``(M,)`` values.
    """
    elements = group.elements()

    def fstar(y: np.ndarray) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        acc = np.zeros(y.shape[0])
        for g in elements:
            acc += f(apply_group_element(group, g, y))
        return acc / len(elements)

    return fstar


def reflection_average(f: Field, k: int, dim: int, include_y1: bool = False) -> Field:
    """Rotation average followed by the single-reflection average over i = 2..N.

    This is the literal two-step averaging from the Green's function
    construction: ``fbar = (1/k) sum_j f(A_j y)`` and
    ``f* = 1/(N-1) sum_{i>=2} (fbar(y) + fbar(B_i y)) / 2``.  It is *not*
    invariant under products of reflections for general ``f``; use
    :func:`symmetrize` for a true projection.  ``include_y1`` adds a final
    average over y1 -> -y1.
    """
    group = SymmetryGroup(((k, (1, 2)),), frozenset(range(1, dim + 1)), dim)
    rots = [group.A(j) for j in range(1, k + 1)]

    def fbar(y):
        return sum(f(apply_group_element(group, g, y)) for g in rots) / k

    def fstar(y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        base = fbar(y)
        acc = np.zeros(y.shape[0])
        for i in range(2, dim + 1):
            acc += 0.5 * (base + fbar(apply_group_element(group, group.B(i), y)))
        return acc / (dim - 1)

    if not include_y1:
        return fstar

    def fstar1(y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return 0.5 * (fstar(y) + fstar(apply_group_element(group, group.B(1), y)))

    return fstar1


@dataclass(frozen=True)
class SymmetrizedPoints:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise InvalidConfigError("weights must be positive")
        if not math.isclose(float(np.sum(self.weights)), 1.0, rel_tol=1e-12):
            raise InvalidConfigError("weights must sum to one")


def _merge_points(points: np.ndarray, weights: np.ndarray) -> SymmetrizedPoints:
    keys: dict[tuple, int] = {}
    out_pts: list[np.ndarray] = []
    out_w: list[float] = []
    scale = max(1.0, float(np.max(np.abs(points))))
    for p, w in zip(points, weights):
        key = tuple(np.round(p / scale, 10) + 0.0)
        if key in keys:
            out_w[keys[key]] += w
        else:
            keys[key] = len(out_pts)
            out_pts.append(p)
            out_w.append(w)
    return SymmetrizedPoints(np.array(out_pts), np.array(out_w))


def symmetrize_points(x: Sequence[float], group: SymmetryGroup, verbatim: bool = False) -> SymmetrizedPoints:
    """Decompose the symmetrized point mass at ``x`` into weighted atoms.

    Default: uniform average over the group orbit (closed under the group).
    ``verbatim=True`` reproduces the rotation-then-single-reflection weights
    used for the symmetric delta source, assuming ``group`` is H_s-type.
    """
    x = np.asarray(x, dtype=float)
    if not verbatim:
        els = group.elements()
        pts = np.array([apply_group_element(group, g, x) for g in els])
        return _merge_points(pts, np.full(len(els), 1.0 / len(els)))
    k = group.rotations[0][0]
    N = group.dim
    pts, ws = [], []
    for i in range(2, N + 1):
        Bi = GroupElement(group.identity.rotations, frozenset({i}))
        for j in range(1, k + 1):
            ax = apply_group_element(group, group.A(j), x)
            pts += [ax, apply_group_element(group, Bi, ax)]
            ws += [0.5 / (k * (N - 1))] * 2
    return _merge_points(np.array(pts), np.array(ws))


def green_majorant(y: np.ndarray, x: Sequence[float], k: int, dim: int, C: float = 1.0) -> np.ndarray:
    """Symmetrized Newtonian majorant for the Green's function of L_k.

    ``1/(N-1) sum_{i>=2} 1/2 (1/k sum_j C|y-A_j x|^{2-N} + 1/k sum_j C|y-B_i A_j x|^{2-N})``
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    group = SymmetryGroup.H_s(k, dim)
    sp = symmetrize_points(x, group, verbatim=True)
    d = np.linalg.norm(y[:, None, :] - sp.points[None, :, :], axis=-1)
    return C * (d ** (2.0 - dim)) @ sp.weights


@dataclass(frozen=True)
class Cell:
    """Sector ``{y : angle(proj y, x_j) <= pi/count}`` around vertex ``index``.

    ``kind`` is ``"Omega"`` for the (y1, y2) polygon and ``"D"`` for the
    (y3, y4) polygon; it must agree with ``config.plane``.
    """

    index: int
    kind: str
    config: PolygonConfig

    def __post_init__(self):
        expected = {"Omega": (1, 2), "D": (3, 4)}
        if self.kind not in expected:
            raise InvalidConfigError(f"unknown cell kind {self.kind!r}")
        if self.config.plane != expected[self.kind]:
            raise InvalidConfigError(f"{self.kind} cells live in plane {expected[self.kind]}")
        if not 1 <= self.index <= self.config.count:
            raise InvalidConfigError("cell index out of range")


def cell_contains(cell: Cell, y: Sequence[float], on_axis: str = "first") -> bool:
    """Closed-sector membership test.

    A point whose projection onto the cell plane vanishes has no angle; with
    ``on_axis="first"`` it is assigned to cell 1, with ``on_axis="raise"`` an
    :class:`AmbiguousMembershipError` is raised.
    """
    y = np.asarray(y, dtype=float)
    a, b = cell.config.plane
    py = np.array([y[a - 1], y[b - 1]])
    nrm = float(np.hypot(*py))
    if nrm == 0.0:
        if on_axis == "raise":
            raise AmbiguousMembershipError("point lies on the cell axis")
        return cell.index == 1
    th = cell.config.angle(cell.index)
    cosang = (py[0] * math.cos(th) + py[1] * math.sin(th)) / nrm
    return cosang >= math.cos(math.pi / cell.config.count) - _CELL_EPS


def cell_index(config: PolygonConfig, y: Sequence[float]) -> int:
    """Index of the cell whose open sector contains ``y`` (ties -> lowest)."""
    y = np.asarray(y, dtype=float)
    a, b = config.plane
    if y[a - 1] == 0.0 and y[b - 1] == 0.0:
        return 1
    ang = math.atan2(y[b - 1], y[a - 1]) % (2 * math.pi)
    step = 2 * math.pi / config.count
    return int(math.floor(ang / step + 0.5)) % config.count + 1


def orbit(points: Iterable[Sequence[float]], group: SymmetryGroup) -> np.ndarray:
    """All images of ``points`` under ``group`` (duplicates removed)."""
    pts = np.array([apply_group_element(group, g, p) for p in points for g in group.elements()])
    return _merge_points(pts, np.full(len(pts), 1.0 / len(pts))).points
