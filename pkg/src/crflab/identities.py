"""Pointwise operator identities behind the entropy monotonicity.

With u = e^{-f} a positive solution of the conjugate heat equation, set

    w = 2 lap f - |grad f|^2 - 2(m+1) f ,      v = w e^{-f} ,

so that integral v dmu equals the entropy W(g, e^{-f}) after one
integration by parts.  The backward parabolic (conjugate) operator is

    box* = -d/dt - lap_{g(t)} + (m+1) p(t) ,

and the central pointwise identity expresses box* v in closed form:

    box* v = -2 |Rc + mg + hess f|^2 u - (2/m) |Rc + mg|^2 u
             - 2 |grad f|^2 u - 2 |grad f|^2 p u + 4 div(p grad u) .

Integrating and flipping sign recovers the four-term evolution formula of
W, because the divergence term's node sum vanishes exactly on the
periodic grid; that consistency is asserted in the tests at round-off
rather than truncation.

Two supporting evolution identities are checked the same way: the
commutation rule for d/dt(lap f) under a metric motion ("Laplacian
variation") and the parabolic Bochner formula for d/dt|grad f|^2.  Each
has two assembly forms:

  * ``form="crf"``: the flow-specialized right-hand side (curvature,
    pressure gradient, and the constant-curvature constraint folded in);
    meaningful on real flow trajectories.
  * ``form="general"``: the metric velocity enters as the discrete time
    difference of the stored metric, with no constraint assumptions;
    this is the form that degenerates correctly on synthetic (static or
    otherwise injected) trajectories.

Time derivatives are centered differences on the trajectory grid;
first/last indices are excluded from identity sweeps so one-sided
stencils never pollute convergence-order measurements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conjugate import ConjugateHeatSolution
from .errors import PositivityLossError
from .fields import MetricField, SymTensorField
from .flow import FlowTrajectory
from .geometry import (divergence_vec, grad_inner, gradient, gradient_sq,
                       hessian, integrate, laplace_beltrami, ricci,
                       tensor_norm_sq)
from .grid import grad_components

__all__ = [
    "SpacetimeField", "f_field", "v_field",
    "assemble_w", "assemble_v",
    "apply_conjugate_op", "conjugate_v_rhs", "boxstar_v_residual",
    "check_bochner", "check_laplacian_variation",
]


@dataclass
class SpacetimeField:
    """Scalar field per trajectory time index, sharing the time grid."""

    times: np.ndarray
    values: np.ndarray          # (nt, *grid.shape)

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ValueError("times and values disagree in length")

    def __len__(self):
        return len(self.times)


def f_field(sol: ConjugateHeatSolution) -> SpacetimeField:
    """f = -ln u from a conjugate heat solution; u must be positive."""
    if sol.min_u <= 0.0:
        raise PositivityLossError("conjugate solution", min_value=sol.min_u)
    return SpacetimeField(sol.times.copy(), -np.log(sol.u))


def assemble_w(g: MetricField, f: np.ndarray) -> np.ndarray:
    """w = 2 lap f - |grad f|^2 - 2(m+1) f."""
    f = np.asarray(f, dtype=np.float64)
    return (2.0 * laplace_beltrami(g, f) - gradient_sq(g, f)
            - 2.0 * g.grid.dim * f)


def assemble_v(g: MetricField, f: np.ndarray) -> np.ndarray:
    """v = w e^{-f}; algebraically exact product of assemble_w and e^{-f}."""
    f = np.asarray(f, dtype=np.float64)
    return assemble_w(g, f) * np.exp(-f)


def v_field(traj: FlowTrajectory, sol: ConjugateHeatSolution) -> SpacetimeField:
    ff = f_field(sol)
    vals = np.empty_like(ff.values)
    for i in range(len(traj)):
        vals[i] = assemble_v(traj.state(i).g, ff.values[i])
    return SpacetimeField(ff.times, vals)


def apply_conjugate_op(traj: FlowTrajectory, h: SpacetimeField, idx: int) -> np.ndarray:
    """box* h at an interior time index.

    -(h_{i+1} - h_{i-1}) / (2 dt) - lap_{g_i} h_i + (m+1) p_i h_i
    """
    if not (0 < idx < len(traj) - 1):
        raise IndexError(f"index {idx} not interior to [1, {len(traj) - 2}]")
    st = traj.state(idx)
    m = traj.m
    dt = traj.dt
    ddt = (h.values[idx + 1] - h.values[idx - 1]) / (2.0 * dt)
    return -ddt - laplace_beltrami(st.g, h.values[idx]) + (m + 1) * st.p * h.values[idx]


def conjugate_v_rhs(g: MetricField, u: np.ndarray, p: np.ndarray,
                    ric: SymTensorField | None = None) -> np.ndarray:
    """Closed-form box* v: five terms assembled pointwise with f = -ln u."""
    u = np.asarray(u, dtype=np.float64)
    if float(np.min(u)) <= 0.0:
        raise PositivityLossError("density", min_value=float(np.min(u)))
    grid = g.grid
    m = grid.dim - 1
    if ric is None:
        ric = ricci(g)
    f = -np.log(u)
    p = np.asarray(p, dtype=np.float64)

    shifted = SymTensorField(grid, ric.comps + m * g.comps, copy=False)
    full = SymTensorField(grid, shifted.comps + hessian(g, f).comps, copy=False)
    gsq = gradient_sq(g, f)
    p_grad_u = p[..., None] * gradient(g, u)
    return (-2.0 * tensor_norm_sq(g, full) * u
            - (2.0 / m) * tensor_norm_sq(g, shifted) * u
            - 2.0 * gsq * u
            - 2.0 * gsq * p * u
            + 4.0 * divergence_vec(g, p_grad_u))


def boxstar_v_residual(traj: FlowTrajectory, sol: ConjugateHeatSolution,
                       idx: int) -> float:
    """sup |box* v - closed form| at one interior index."""
    if not (0 < idx < len(traj) - 1):
        raise IndexError(f"index {idx} not interior to [1, {len(traj) - 2}]")
    window = slice(idx - 1, idx + 2)
    fvals = -np.log(sol.u[window])
    vvals = np.empty_like(fvals)
    for j, i in enumerate(range(idx - 1, idx + 2)):
        vvals[j] = assemble_v(traj.state(i).g, fvals[j])
    h = SpacetimeField(traj.times[window], vvals)

    st = traj.state(idx)
    dt = traj.dt
    m = traj.m
    ddt = (h.values[2] - h.values[0]) / (2.0 * dt)
    lhs = -ddt - laplace_beltrami(st.g, h.values[1]) + (m + 1) * st.p * h.values[1]
    rhs = conjugate_v_rhs(st.g, sol.field(idx), st.p)
    return float(np.max(np.abs(lhs - rhs)))


def _metric_velocity(traj: FlowTrajectory, idx: int) -> SymTensorField:
    cl, _ = traj.raw(idx - 1)
    ch, _ = traj.raw(idx + 1)
    return SymTensorField(traj.grid, (ch - cl) / (2.0 * traj.dt), copy=False)


def _dt_scalar(series_prev, series_next, dt):
    return (series_next - series_prev) / (2.0 * dt)


def check_laplacian_variation(traj: FlowTrajectory, f: SpacetimeField,
                              idx: int, form: str = "crf") -> float:
    """Residual of d/dt(lap f) = lap(df/dt) + <metric-motion correction>.

    form="crf" uses the flow form of the correction,
        2 <Rc, hess f> + 2 (p+m) lap f - (m-1) <grad p, grad f> ,
    which folds in the constraint and the elliptic pressure relation.
    form="general" derives the correction from the trajectory's own
    discrete metric velocity h = dg/dt:
        -<h, hess f> - <div h - grad(tr h)/2, grad f> ,
    valid for any metric motion including injected static ones.
    """
    if not (0 < idx < len(traj) - 1):
        raise IndexError(f"index {idx} not interior")
    grid = traj.grid
    dt = traj.dt
    m = traj.m

    st = traj.state(idx)
    g = st.g
    fi = f.values[idx]

    lap_prev = laplace_beltrami(traj.state(idx - 1).g, f.values[idx - 1])
    lap_next = laplace_beltrami(traj.state(idx + 1).g, f.values[idx + 1])
    lhs = _dt_scalar(lap_prev, lap_next, dt)

    dfdt = _dt_scalar(f.values[idx - 1], f.values[idx + 1], dt)
    rhs = laplace_beltrami(g, dfdt)

    if form == "crf":
        ric = ricci(g)
        hess = hessian(g, fi)
        mixed_ric = np.einsum("...ik,...kj->...ij", g.inv_dense, ric.dense)
        mixed_hess = np.einsum("...ik,...kj->...ij", g.inv_dense, hess.dense)
        ric_hess = np.einsum("...ij,...ji->...", mixed_ric, mixed_hess)
        rhs = rhs + (2.0 * ric_hess + 2.0 * (st.p + m) * laplace_beltrami(g, fi)
                     - (m - 1) * grad_inner(g, st.p, fi))
    elif form == "general":
        rhs = rhs + _general_lap_correction(g, fi, _metric_velocity(traj, idx))
    else:
        raise ValueError(f"unknown form {form!r}")
    return float(np.max(np.abs(lhs - rhs)))


def _general_lap_correction(g: MetricField, f: np.ndarray,
                            h: SymTensorField) -> np.ndarray:
    """-<h, hess f> - <div h - grad(tr h)/2, grad f> for dg/dt = h."""
    grid = g.grid
    hess = hessian(g, f)
    mixed_h = np.einsum("...ik,...kj->...ij", g.inv_dense, h.dense)
    mixed_hess = np.einsum("...ik,...kj->...ij", g.inv_dense, hess.dense)
    h_hess = np.einsum("...ij,...ji->...", mixed_h, mixed_hess)

    # (div h)_j = g^{ab} nabla_a h_{bj}; assembled from coordinate
    # derivatives and two connection corrections
    from .geometry import _christoffel_packed
    from .fields import packed_index
    n = grid.dim
    K = packed_index(n)
    gamma = _christoffel_packed(g)[..., K]          # [..., k, i, j]
    dh = grad_components(grid, h.dense, stacked_axis=-3)   # [..., a, i, j]
    nabla_h = (dh
               - np.einsum("...kai,...kj->...aij", gamma, h.dense)
               - np.einsum("...kaj,...ik->...aij", gamma, h.dense))
    div_h = np.einsum("...ab,...abj->...j", g.inv_dense, nabla_h)

    tr_h = np.einsum("...ab,...ab->...", g.inv_dense, h.dense)
    dtr = grad_components(grid, tr_h, stacked_axis=-1)
    df = grad_components(grid, f, stacked_axis=-1)
    vec = div_h - 0.5 * dtr
    vec_dot_grad = np.einsum("...ab,...a,...b->...", g.inv_dense, vec, df)
    return -h_hess - vec_dot_grad


def check_bochner(traj: FlowTrajectory, f: SpacetimeField, idx: int,
                  form: str = "crf") -> float:
    """Residual of the parabolic Bochner formula at an interior index.

    form="crf" (for f = -ln u on a real flow trajectory):
      (d/dt + lap)|grad f|^2 = 4 Rc(grad f, grad f) + 2 |hess f|^2
          + 2 (p+m) |grad f|^2 + 2 <grad |grad f|^2, grad f>
          - 2 (m+1) <grad p, grad f> .
    form="general" replaces the metric-motion part with the trajectory's
    discrete dg/dt and the time derivative of f with its centered
    difference, keeping the spatial Bochner identity as the content:
      (d/dt + lap)|grad f|^2 = -h(grad f, grad f) + 2 <grad(df/dt), grad f>
          + 2 |hess f|^2 + 2 <grad lap f, grad f> + 2 Rc(grad f, grad f) .
    """
    if not (0 < idx < len(traj) - 1):
        raise IndexError(f"index {idx} not interior")
    grid = traj.grid
    dt = traj.dt
    m = traj.m
    st = traj.state(idx)
    g = st.g
    fi = f.values[idx]

    gsq_prev = gradient_sq(traj.state(idx - 1).g, f.values[idx - 1])
    gsq_next = gradient_sq(traj.state(idx + 1).g, f.values[idx + 1])
    gsq = gradient_sq(g, fi)
    lhs = _dt_scalar(gsq_prev, gsq_next, dt) + laplace_beltrami(g, gsq)

    ric = ricci(g)
    gradf = gradient(g, fi)            # contravariant
    df = grad_components(grid, fi, stacked_axis=-1)
    ric_gg = np.einsum("...ij,...i,...j->...", ric.dense, gradf, gradf)
    hess = hessian(g, fi)
    hess_sq = tensor_norm_sq(g, hess)

    if form == "crf":
        rhs = (4.0 * ric_gg + 2.0 * hess_sq
               + 2.0 * (st.p + m) * gsq
               + 2.0 * grad_inner(g, gsq, fi)
               - 2.0 * (m + 1) * grad_inner(g, st.p, fi))
    elif form == "general":
        h = _metric_velocity(traj, idx)
        h_gg = np.einsum("...ij,...i,...j->...", h.dense, gradf, gradf)
        dfdt = _dt_scalar(f.values[idx - 1], f.values[idx + 1], dt)
        rhs = (-h_gg
               + 2.0 * grad_inner(g, dfdt, fi)
               + 2.0 * hess_sq
               + 2.0 * grad_inner(g, laplace_beltrami(g, fi), fi)
               + 2.0 * ric_gg)
    else:
        raise ValueError(f"unknown form {form!r}")
    return float(np.max(np.abs(lhs - rhs)))
