"""Symmetric 2-tensor fields with exact-by-storage symmetry.

Metrics and curvature tensors are stored as packed upper triangles,
node-major with the component axis last (``(*grid.shape, n*(n+1)//2)``).
Unpacking always produces an exactly symmetric matrix, so symmetry can
never drift no matter what arithmetic produced the components.

For the dominant three-dimensional case the determinant, inverse, and
eigenvalue extremes are computed with closed-form vectorized kernels;
batched LAPACK calls turned out to be an order of magnitude slower at
32^3 and would dominate the flow integrator.  General dimensions fall
back to ``numpy.linalg``.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .errors import DegenerateMetricError
from .grid import GridSpec

__all__ = [
    "SymTensorField",
    "MetricField",
    "pack_symmetric",
    "unpack_symmetric",
    "sym_pairs",
    "packed_index",
    "min_eig_sym3",
]

EPS_POSDEF = 1e-10


def sym_pairs(n: int) -> list[tuple[int, int]]:
    """Index pairs (i <= j) in packed component order."""
    return [(i, j) for i in range(n) for j in range(i, n)]


def packed_index(n: int) -> np.ndarray:
    """n x n lookup table: packed component index of the (i, j) entry."""
    K = np.empty((n, n), dtype=np.intp)
    for k, (i, j) in enumerate(sym_pairs(n)):
        K[i, j] = K[j, i] = k
    return K


def pack_symmetric(dense: np.ndarray) -> np.ndarray:
    """Pack the last two (n, n) axes into n(n+1)/2 components.

    Off-diagonal pairs are averaged, so packing an exactly symmetric
    matrix is lossless and packing a numerically near-symmetric one
    symmetrizes it.
    """
    n = dense.shape[-1]
    comps = np.empty(dense.shape[:-2] + (n * (n + 1) // 2,), dtype=dense.dtype)
    for k, (i, j) in enumerate(sym_pairs(n)):
        if i == j:
            comps[..., k] = dense[..., i, j]
        else:
            comps[..., k] = 0.5 * (dense[..., i, j] + dense[..., j, i])
    return comps


def unpack_symmetric(comps: np.ndarray, n: int) -> np.ndarray:
    dense = np.empty(comps.shape[:-1] + (n, n), dtype=comps.dtype)
    for k, (i, j) in enumerate(sym_pairs(n)):
        dense[..., i, j] = comps[..., k]
        dense[..., j, i] = comps[..., k]
    return dense


def _det3(c):
    # packed order: xx, xy, xz, yy, yz, zz
    xx, xy, xz, yy, yz, zz = (c[..., k] for k in range(6))
    return (xx * (yy * zz - yz * yz)
            - xy * (xy * zz - yz * xz)
            + xz * (xy * yz - yy * xz))


def _inv3(c, det):
    xx, xy, xz, yy, yz, zz = (c[..., k] for k in range(6))
    inv = np.empty_like(c)
    inv[..., 0] = (yy * zz - yz * yz)
    inv[..., 1] = (xz * yz - xy * zz)
    inv[..., 2] = (xy * yz - xz * yy)
    inv[..., 3] = (xx * zz - xz * xz)
    inv[..., 4] = (xy * xz - xx * yz)
    inv[..., 5] = (xx * yy - xy * xy)
    inv /= det[..., None]
    return inv


def min_eig_sym3(comps: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of packed symmetric 3x3 fields (closed form)."""
    xx, xy, xz, yy, yz, zz = (comps[..., k] for k in range(6))
    q = (xx + yy + zz) / 3.0
    dxx, dyy, dzz = xx - q, yy - q, zz - q
    p2 = dxx * dxx + dyy * dyy + dzz * dzz + 2.0 * (xy * xy + xz * xz + yz * yz)
    p = np.sqrt(np.maximum(p2, 0.0) / 6.0)
    # r = det(B)/2 for B = (A - q I)/p; guard isotropic nodes where p -> 0
    safe = np.where(p > 0.0, p, 1.0)
    b = np.stack([dxx, xy, xz, dyy, yz, dzz], axis=-1) / safe[..., None]
    r = np.clip(0.5 * _det3(b), -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    lam_min = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    return np.where(p2 > 0.0, lam_min, q)


class SymTensorField:
    """Symmetric 2-tensor on every grid node, packed upper-triangle storage."""

    def __init__(self, grid: GridSpec, comps: np.ndarray, copy: bool = True):
        n = grid.dim
        ncomp = n * (n + 1) // 2
        comps = np.array(comps, dtype=np.float64, copy=copy)
        if comps.shape != grid.shape + (ncomp,):
            raise ValueError(
                f"component array shape {comps.shape} does not match "
                f"grid {grid.shape} with {ncomp} packed components")
        comps.setflags(write=False)
        self.grid = grid
        self.comps = comps

    @classmethod
    def from_dense(cls, grid: GridSpec, dense: np.ndarray) -> "SymTensorField":
        return cls(grid, pack_symmetric(np.asarray(dense, dtype=np.float64)),
                   copy=False)

    @classmethod
    def zero(cls, grid: GridSpec) -> "SymTensorField":
        n = grid.dim
        return cls(grid, np.zeros(grid.shape + (n * (n + 1) // 2,)), copy=False)

    @cached_property
    def dense(self) -> np.ndarray:
        d = unpack_symmetric(self.comps, self.grid.dim)
        d.setflags(write=False)
        return d

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.comps)))


class MetricField(SymTensorField):
    """Riemannian metric: symmetric positive definite at every node.

    Positive definiteness (min eigenvalue > ``eps_pd``) is enforced at
    construction; fields are immutable afterwards, so the check never has
    to be repeated.  Violations raise :class:`DegenerateMetricError`
    naming the worst node.
    """

    def __init__(self, grid: GridSpec, comps: np.ndarray, copy: bool = True,
                 validate: bool = True, eps_pd: float = EPS_POSDEF):
        super().__init__(grid, comps, copy=copy)
        self.eps_pd = eps_pd
        if validate:
            if not np.all(np.isfinite(self.comps)):
                bad = np.argwhere(~np.isfinite(self.comps).all(axis=-1))[0]
                raise DegenerateMetricError(bad, np.nan)
            lam = self.min_eig_field()
            if np.min(lam) <= eps_pd:
                node = np.unravel_index(int(np.argmin(lam)), grid.shape)
                raise DegenerateMetricError(node, float(np.min(lam)))

    @classmethod
    def flat(cls, grid: GridSpec, scale: float = 1.0) -> "MetricField":
        """Constant multiple of the identity metric."""
        n = grid.dim
        comps = np.zeros(grid.shape + (n * (n + 1) // 2,))
        for k, (i, j) in enumerate(sym_pairs(n)):
            if i == j:
                comps[..., k] = scale
        return cls(grid, comps, copy=False)

    @classmethod
    def conformally_flat(cls, grid: GridSpec, phi: np.ndarray) -> "MetricField":
        """Metric exp(2*phi) * delta for a scalar field phi."""
        return cls.flat(grid).conformal(phi)

    def conformal(self, phi: np.ndarray) -> "MetricField":
        """Pointwise rescale by exp(2*phi)."""
        factor = np.exp(2.0 * np.asarray(phi))
        return MetricField(self.grid, self.comps * factor[..., None], copy=False)

    def min_eig_field(self) -> np.ndarray:
        if self.grid.dim == 3:
            return min_eig_sym3(self.comps)
        return np.linalg.eigvalsh(self.dense)[..., 0]

    @cached_property
    def min_eig(self) -> float:
        return float(np.min(self.min_eig_field()))

    @cached_property
    def det(self) -> np.ndarray:
        if self.grid.dim == 3:
            d = _det3(self.comps)
        else:
            d = np.linalg.det(self.dense)
        d.setflags(write=False)
        return d

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        s = np.sqrt(self.det)
        s.setflags(write=False)
        return s

    @cached_property
    def inv_comps(self) -> np.ndarray:
        """Packed components of the inverse metric."""
        if self.grid.dim == 3:
            inv = _inv3(self.comps, self.det)
        else:
            inv = pack_symmetric(np.linalg.inv(self.dense))
        inv.setflags(write=False)
        return inv

    @cached_property
    def inv_dense(self) -> np.ndarray:
        d = unpack_symmetric(self.inv_comps, self.grid.dim)
        d.setflags(write=False)
        return d

    def volume(self) -> float:
        return float(np.sum(self.sqrt_det)) * self.grid.cell_volume
