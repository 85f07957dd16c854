"""Numerical ingredients of the multi-bump reduction for -Lap u = K(|y|) u^{(N+2)/(N-2)}.

Bubbles and moments, symmetric polygon configurations, radial potentials,
adaptive quadrature, weighted sup norms, energies and the reduced energy,
local Pohozaev identities, and the operators of the finite-dimensional
reduction around a glued multi-bump ansatz.
"""

__version__ = "0.1.0"

from .bubble import Bubble, Kernel, MomentTable, Tower, closed_moments, critical_exponent
from .errors import MultibumpError
from .potential import PotentialK
from .quadrature import IntegralResult, QuadratureSpec
from .symmetry import PolygonConfig, SymmetryGroup

__all__ = [
    "Bubble",
    "IntegralResult",
    "Kernel",
    "MomentTable",
    "MultibumpError",
    "PolygonConfig",
    "PotentialK",
    "QuadratureSpec",
    "SymmetryGroup",
    "Tower",
    "closed_moments",
    "critical_exponent",
    "__version__",
]
