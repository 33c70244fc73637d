"""Exact experiments on maximal partial sums of martingale difference systems.

Piecewise-constant functions on [0, 1) with rational breakpoints and values in
Q(sqrt 2, sqrt 3, ...) are handled exactly; floats only appear inside
optimisers and are reported with error bounds.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BudgetError,
    DomainError,
    LemmaFailure,
    PrecisionError,
    PreconditionError,
    ValidationError,
)
from .radical import RadScalar, precision, rad  # noqa: E402
from .sets import Interval, SimpleSet, simple_set  # noqa: E402
from .pcf import PCF, lp_norm, integrate  # noqa: E402
from .mp import PwAffineMap, Partition, compose, pullback, u_map, eta_map  # noqa: E402
from .systems import OrthoSystem, SplitTree, classical_haar, generalized_haar, rademacher  # noqa: E402

__all__ = [
    "__version__",
    "BudgetError", "DomainError", "LemmaFailure", "PrecisionError", "PreconditionError", "ValidationError",
    "RadScalar", "precision", "rad",
    "Interval", "SimpleSet", "simple_set",
    "PCF", "lp_norm", "integrate",
    "PwAffineMap", "Partition", "compose", "pullback", "u_map", "eta_map",
    "OrthoSystem", "SplitTree", "classical_haar", "generalized_haar", "rademacher",
]
