"""Elliptic pressure equation of the conformal Ricci flow.

The flow keeps scalar curvature pinned at -m(m+1) by sourcing a pressure
field p from

    (-lap_g + (m+1)) p = (1/m) |Rc + m g|^2_g .

The operator is symmetric positive definite in the volume-weighted inner
product (the zeroth-order shift m+1 > 0 bounds it away from zero), so the
solve is a matrix-free preconditioned conjugate gradient.  Multiplying
through by sqrt(det g) symmetrizes the system in the plain l2 sense:

    K q = -D_i(sqrt(det g) g^{ij} D_j q) + V sqrt(det g) q ,

which is handed to SciPy's CG with a Jacobi preconditioner whose diagonal
is assembled in closed form from the stencil weights.

A synthetic right-hand-side entry point (`solve_helmholtz`) is exposed so
tests can inject arbitrary sources without manufacturing special metrics.

Solves against different metrics are independent and thread-safe; the CG
iteration itself is sequential.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import SolverFailureError
from .fields import MetricField, SymTensorField, sym_pairs
from .geometry import integrate, ricci, tensor_norm_sq
from .grid import diff4

__all__ = ["PressureSolve", "solve_pressure", "solve_helmholtz",
           "apply_pressure_operator", "HelmholtzKernel"]

EPS_PRESSURE = 1e-8    # monitored floor for min(p) on flow states
DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12   # absolute fallback when the source nearly vanishes


@dataclass
class PressureSolve:
    """Result of one pressure solve.

    residual_norm is the volume-weighted relative residual of the original
    (unsymmetrized) equation, measured after the solve; min_p is reported
    so callers can monitor the p >= 0 property, which is a theorem for the
    continuum flow but only a diagnostic here.
    """

    p: np.ndarray
    residual_norm: float
    iterations: int
    min_p: float
    residual_history: list[float] = field(default_factory=list)


class HelmholtzKernel:
    """Matrix-free application of (-lap_g + V) and its symmetrized form.

    Precomputes the flux coefficients sqrt(det g) g^{ij} once so repeated
    applications (CG iterations) only pay for stencils and pointwise ops.
    """

    def __init__(self, g: MetricField, V: np.ndarray | float):
        self.g = g
        self.grid = g.grid
        self.area = g.sqrt_det[..., None, None] * g.inv_dense
        self.V = np.broadcast_to(np.asarray(V, dtype=np.float64), g.grid.shape)
        self.v_sqrt_det = self.V * g.sqrt_det

    def apply(self, q: np.ndarray) -> np.ndarray:
        """(-lap_g + V) q."""
        return self.apply_symmetrized(q) / self.g.sqrt_det

    def apply_symmetrized(self, q: np.ndarray) -> np.ndarray:
        """sqrt(det g) * [(-lap_g + V) q]; symmetric in plain l2."""
        grid = self.grid
        h = grid.spacing
        df = np.stack([diff4(q, a, h[a]) for a in range(grid.dim)], axis=-1)
        flux = np.einsum("...ab,...b->...a", self.area, df)
        acc = diff4(flux[..., 0], 0, h[0])
        for a in range(1, grid.dim):
            acc += diff4(flux[..., a], a, h[a])
        return self.v_sqrt_det * q - acc

    def jacobi_diagonal(self) -> np.ndarray:
        """Exact diagonal of the symmetrized operator.

        The composed stencil D(area * D q) touches q at the center only
        through paired coefficients c_s * c_{-s} = -c_s^2, evaluated at
        the shifted nodes, for each axis and shift s in {1, 2}.
        """
        grid = self.grid
        diag = self.v_sqrt_det.copy()
        for a in range(grid.dim):
            h = grid.spacing[a]
            A_aa = self.area[..., a, a]
            c1sq = (8.0 / 12.0 / h) ** 2
            c2sq = (1.0 / 12.0 / h) ** 2
            diag += c1sq * (np.roll(A_aa, 1, axis=a) + np.roll(A_aa, -1, axis=a))
            diag += c2sq * (np.roll(A_aa, 2, axis=a) + np.roll(A_aa, -2, axis=a))
        return diag


def _weighted_norm(g: MetricField, r: np.ndarray) -> float:
    return float(np.sqrt(max(integrate(g, r * r), 0.0)))


def solve_helmholtz(g: MetricField, rhs: np.ndarray, shift: np.ndarray | float,
                    rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                    maxiter: int | None = None,
                    x0: np.ndarray | None = None) -> PressureSolve:
    """Solve (-lap_g + shift) q = rhs by Jacobi-preconditioned CG.

    The convergence target is a volume-weighted relative residual below
    ``rtol`` (absolute ``atol`` when the source is essentially zero).
    Raises :class:`SolverFailureError`, carrying the residual history, if
    the iteration cap is reached first.
    """
    grid = g.grid
    kern = HelmholtzKernel(g, shift)
    rhs = np.asarray(rhs, dtype=np.float64)
    b = rhs * g.sqrt_det
    shape = grid.shape
    nn = grid.num_nodes

    op = LinearOperator(
        (nn, nn),
        matvec=lambda v: kern.apply_symmetrized(v.reshape(shape)).ravel(),
        dtype=np.float64)
    inv_diag = 1.0 / kern.jacobi_diagonal()
    M = LinearOperator((nn, nn), matvec=lambda v: (v.reshape(shape) * inv_diag).ravel(),
                       dtype=np.float64)

    rhs_norm = _weighted_norm(g, rhs)
    target = max(rtol * rhs_norm, atol)
    if maxiter is None:
        maxiter = 40 * max(grid.resolution)

    history: list[float] = []
    iters = 0

    def callback(xk):
        nonlocal iters
        iters += 1
        r = kern.apply(xk.reshape(shape)) - rhs
        history.append(_weighted_norm(g, r))

    x0vec = None if x0 is None else np.asarray(x0, dtype=np.float64).ravel()
    # scipy's stopping rule is on the symmetrized residual; ask for a bit
    # more than needed, then verify the real residual below.
    sol, _ = cg(op, b.ravel(), x0=x0vec, rtol=rtol * 1e-2, atol=atol * 1e-2,
                maxiter=maxiter, M=M, callback=callback)
    q = sol.reshape(shape)

    res = _weighted_norm(g, kern.apply(q) - rhs)
    if res > target:
        raise SolverFailureError(res / max(rhs_norm, 1e-300), iters, history)
    rel = res / rhs_norm if rhs_norm > 0 else res
    return PressureSolve(p=q, residual_norm=rel, iterations=iters,
                         min_p=float(np.min(q)), residual_history=history)


def apply_pressure_operator(g: MetricField, q: np.ndarray) -> np.ndarray:
    """(-lap_g + (m+1)) q with m+1 = grid dimension; for operator tests."""
    return HelmholtzKernel(g, float(g.grid.dim)).apply(q)


def pressure_rhs(g: MetricField, ric: SymTensorField | None = None) -> np.ndarray:
    """(1/m) |Rc + m g|^2_g, the nonnegative pressure source."""
    m = g.grid.dim - 1
    if ric is None:
        ric = ricci(g)
    shifted = SymTensorField(g.grid, ric.comps + m * g.comps, copy=False)
    return tensor_norm_sq(g, shifted) / m


def solve_pressure(g: MetricField, ric: SymTensorField | None = None,
                   rtol: float = DEFAULT_RTOL,
                   maxiter: int | None = None,
                   x0: np.ndarray | None = None) -> PressureSolve:
    """Pressure solve for one metric; m is grid dimension minus one.

    Pass ``ric`` when the Ricci tensor is already available (the flow
    integrator computes it anyway) and ``x0`` to warm-start from a nearby
    state's pressure.
    """
    m = g.grid.dim - 1
    return solve_helmholtz(g, pressure_rhs(g, ric), float(m + 1),
                           rtol=rtol, maxiter=maxiter, x0=x0)
