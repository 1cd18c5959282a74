"""crflab: a numerical laboratory for conformal Ricci flow.

The flow couples a parabolic metric evolution to an elliptic equation for
a scalar pressure that holds the scalar curvature at the Einstein level
R = -m(m+1).  Alongside the integrator the package solves the associated
conjugate heat equation backward in time and evaluates the entropy
functionals whose monotonicity the flow is supposed to exhibit, to
discretization accuracy, together with the pointwise operator identities
behind that monotonicity.
"""

from .errors import (
    CrfLabError,
    DegenerateMetricError,
    GridMismatchError,
    NormalizationFailureError,
    PositivityLossError,
    SolverFailureError,
    UnattainableTargetError,
)
from .fields import MetricField, SymTensorField
from .grid import GridSpec

__all__ = [
    "GridSpec",
    "MetricField",
    "SymTensorField",
    "CrfLabError",
    "DegenerateMetricError",
    "GridMismatchError",
    "NormalizationFailureError",
    "PositivityLossError",
    "SolverFailureError",
    "UnattainableTargetError",
]

__version__ = "0.1.0"
