"""Periodic structured grids and finite-difference primitives.

Everything downstream (curvature assembly, elliptic solves, time
integration) lives on a uniform grid covering an n-torus.  Spatial
derivatives are fourth-order centered stencils with periodic wrap, so the
grid is a genuinely closed manifold: summing any stencil output over all
nodes telescopes to zero exactly, which is what makes the discrete
divergence theorem and integration by parts hold to round-off.

Array layout convention (used by every module): grid axes come first,
tensor component axes trail.  ``np.roll`` along a grid axis therefore
shifts a whole field regardless of its tensor rank.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

__all__ = ["GridSpec", "diff4", "grad_components"]

# Fourth-order centered first-derivative weights, correlate orientation:
# D f(x_i) = [f_{i-2} - 8 f_{i-1} + 8 f_{i+1} - f_{i+2}] / (12 h)
_D4_WEIGHTS = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def _per_axis(value, dim, cast, name):
    if np.isscalar(value):
        return (cast(value),) * dim
    out = tuple(cast(v) for v in value)
    if len(out) != dim:
        raise ValueError(f"{name}: expected {dim} per-axis entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on an n-torus.

    dim: spatial dimension n; at least 3, since the target curvature level
        R = -(n-1)n is unreachable on a 2-torus.
    resolution: nodes per axis (scalar or per-axis tuple), each at least 8
        so the wide fourth-order stencils stay meaningful.
    period: axis lengths (scalar or per-axis tuple), each positive.
    """

    dim: int
    resolution: tuple[int, ...]
    period: tuple[float, ...] = 1.0

    def __post_init__(self):
        if self.dim < 3:
            raise ValueError(f"dim must be >= 3, got {self.dim}")
        object.__setattr__(self, "resolution",
                           _per_axis(self.resolution, self.dim, int, "resolution"))
        object.__setattr__(self, "period",
                           _per_axis(self.period, self.dim, float, "period"))
        if min(self.resolution) < 8:
            raise ValueError(f"resolution must be >= 8 per axis, got {self.resolution}")
        if min(self.period) <= 0.0:
            raise ValueError(f"periods must be > 0, got {self.period}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / N for L, N in zip(self.period, self.resolution))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.resolution))

    def axis_coords(self, axis: int) -> np.ndarray:
        """Node coordinates along one axis (left endpoints, periodic)."""
        N = self.resolution[axis]
        return np.arange(N) * (self.period[axis] / N)

    def meshes(self) -> list[np.ndarray]:
        """Full coordinate meshes, indexed ``ij`` to match field layout."""
        return list(np.meshgrid(*(self.axis_coords(a) for a in range(self.dim)),
                                indexing="ij"))

    def wavenumber(self, axis: int, mode: int = 1) -> float:
        """Angular wavenumber of the given Fourier mode along an axis."""
        return 2.0 * np.pi * mode / self.period[axis]


def diff4(arr: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Fourth-order centered first derivative along a periodic grid axis.

    ``arr`` may carry trailing component axes; ``axis`` counts grid axes
    from the front.  The stencil matrix is exactly antisymmetric, which is
    what makes the discrete divergence theorem exact on the periodic grid.
    """
    return ndimage.correlate1d(np.asarray(arr, dtype=np.float64),
                               _D4_WEIGHTS / h, axis=axis, mode="wrap")


def grad_components(grid: GridSpec, arr: np.ndarray, stacked_axis: int = -1) -> np.ndarray:
    """All coordinate derivatives of ``arr``, stacked along a new axis."""
    h = grid.spacing
    return np.stack([diff4(arr, a, h[a]) for a in range(grid.dim)], axis=stacked_axis)
