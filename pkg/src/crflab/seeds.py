"""Deterministic seed metrics for experiments.

The normalizer needs seeds whose conformal class genuinely carries
negative constant curvature, which on a torus means *non*-conformally-
flat data; a pure conformal factor on the flat metric never qualifies.
The family built here shears the flat metric with low-frequency
off-diagonal and diagonal trigonometric perturbations, which produces a
robustly negative Yamabe-type class for moderate amplitudes.
"""

from __future__ import annotations

import numpy as np

from .fields import MetricField, sym_pairs
from .grid import GridSpec

__all__ = ["sheared_flat", "conformal_sine"]


def sheared_flat(grid: GridSpec, amplitude: float = 0.4,
                 diagonal: float = 0.5) -> MetricField:
    """Flat metric plus trigonometric shear; not conformally flat.

    amplitude scales the off-diagonal entries, amplitude*diagonal the
    diagonal modulation.  Positivity holds for amplitude below ~0.45.
    """
    n = grid.dim
    meshes = grid.meshes()
    trig = [np.sin(grid.wavenumber(a) * meshes[a]) for a in range(n)]
    cotrig = [np.cos(grid.wavenumber(a) * meshes[a]) for a in range(n)]

    comps = np.zeros(grid.shape + (n * (n + 1) // 2,))
    for c, (i, j) in enumerate(sym_pairs(n)):
        if i == j:
            # modulate each diagonal entry with the next axis's cosine
            comps[..., c] = 1.0 + amplitude * diagonal * cotrig[(i + 1) % n]
        else:
            # off-diagonal shear driven by the remaining axis
            k = next(a for a in range(n) if a != i and a != j) if n == 3 else (i + j) % n
            comps[..., c] = amplitude * trig[k]
    return MetricField(grid, comps, copy=False)


def conformal_sine(grid: GridSpec, amplitude: float = 0.05,
                   axes: tuple[int, ...] = (0,)) -> MetricField:
    """Conformally flat metric exp(2*phi)*delta with a product-sine phi."""
    meshes = grid.meshes()
    phi = np.full(grid.shape, amplitude)
    for a in axes:
        phi = phi * np.sin(grid.wavenumber(a) * meshes[a])
    return MetricField.conformally_flat(grid, phi)
