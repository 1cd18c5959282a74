"""Exception types shared across the package."""

from __future__ import annotations

__all__ = [
    "CrfLabError",
    "DegenerateMetricError",
    "NormalizationFailureError",
    "UnattainableTargetError",
    "SolverFailureError",
    "PositivityLossError",
    "GridMismatchError",
]


class CrfLabError(Exception):
    """Base class for failures raised by the laboratory."""


class DegenerateMetricError(CrfLabError):
    """A metric lost positive definiteness at some node."""

    def __init__(self, node, min_eig):
        self.node = tuple(int(i) for i in node)
        self.min_eig = float(min_eig)
        super().__init__(
            f"metric not positive definite at node {self.node} "
            f"(min eigenvalue {self.min_eig:.3e})")


class NormalizationFailureError(CrfLabError):
    """Curvature normalization did not converge within the iteration cap."""

    def __init__(self, residual, iterations):
        self.residual = float(residual)
        self.iterations = int(iterations)
        super().__init__(
            f"normalization stalled after {self.iterations} iterations, "
            f"sup-residual {self.residual:.3e}")


class UnattainableTargetError(CrfLabError):
    """The seed's conformal class cannot carry the requested curvature.

    Signature: the conformal factor collapses toward zero (or the residual
    stagnates with curvature pinned above the negative target), which is
    what a Yamabe-nonnegative class produces when pushed toward constant
    negative scalar curvature.
    """

    def __init__(self, message):
        super().__init__(message)


class SolverFailureError(CrfLabError):
    """An iterative linear solve did not reach its tolerance."""

    def __init__(self, residual, iterations, history=None):
        self.residual = float(residual)
        self.iterations = int(iterations)
        self.history = list(history) if history is not None else []
        super().__init__(
            f"linear solver failed: residual {self.residual:.3e} "
            f"after {self.iterations} iterations")


class PositivityLossError(CrfLabError):
    """A field that must stay positive went negative."""

    def __init__(self, what, time_index=None, min_value=None):
        self.what = what
        self.time_index = time_index
        self.min_value = min_value
        msg = f"{what} lost positivity"
        if time_index is not None:
            msg += f" at time index {time_index}"
        if min_value is not None:
            msg += f" (min value {min_value:.3e})"
        super().__init__(msg)


class GridMismatchError(CrfLabError):
    """Two objects that must share a grid do not."""
