"""Backward-in-time conjugate heat transport along a stored trajectory.

Along the flow the conjugate heat equation

    du/dt = -lap_{g(t)} u + (m+1) p(t) u

is solved *backward* from terminal data at t = T: in the backward
variable tau = T - t it reads du/dtau = lap u - (m+1) p u, an ordinary
heat-reaction equation that the flow's own parabolic step integrates
stably with the classical four-stage scheme.  Metric and pressure at
stage midpoints come from cubic Lagrange interpolation of the stored
snapshots, so the solution lives on exactly the trajectory's time grid
and finite-difference checks against it stay clean.

Total mass, integrate(g(t), u(t)), is conserved by the continuum
coupling; discretely the only leak is through the constraint drift
(the semi-discrete identity d/dt mass = -integral (R + m(m+1)) u dmu is
exact for these operators), so the reported mass drift doubles as an
integrated constraint monitor.

u is evolved directly rather than through f = -ln u, and positivity is
asserted, never clipped: silent clipping would corrupt every entropy
value downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, PositivityLossError
from .fields import MetricField
from .flow import FlowTrajectory
from .geometry import integrate
from .grid import diff4

__all__ = ["ConjugateHeatSolution", "solve_backward", "gaussian_bump",
           "normalize_mass"]

# cubic Lagrange weights at the midpoint of the middle interval of four
# uniformly spaced samples, and one-sided variants for the ends
_W_MID = np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0
_W_LEFT = np.array([5.0, 15.0, -5.0, 1.0]) / 16.0    # midpoint of first interval
_W_RIGHT = _W_LEFT[::-1].copy()                      # midpoint of last interval


class _StageKernel:
    """Laplace-Beltrami application for interpolated metric components.

    Skips MetricField validation (snapshots were validated when written;
    midpoints differ from them by O(dt) and stay positive for any step
    the integrator survived).
    """

    def __init__(self, grid, comps, p, m):
        g = MetricField(grid, comps, copy=False, validate=False)
        self.grid = grid
        self.sqrt_det = g.sqrt_det
        self.area = self.sqrt_det[..., None, None] * g.inv_dense
        self.reaction = (m + 1) * p

    def rhs_backward(self, u):
        """lap u - (m+1) p u, the d/dtau right-hand side."""
        grid = self.grid
        h = grid.spacing
        df = np.stack([diff4(u, a, h[a]) for a in range(grid.dim)], axis=-1)
        flux = np.einsum("...ab,...b->...a", self.area, df)
        acc = diff4(flux[..., 0], 0, h[0])
        for a in range(1, grid.dim):
            acc += diff4(flux[..., a], a, h[a])
        return acc / self.sqrt_det - self.reaction * u


@dataclass
class ConjugateHeatSolution:
    """u on every trajectory time, solved backward from index -1.

    mass[i] = integrate(g(t_i), u(t_i)); max_mass_drift is relative to
    the terminal mass.
    """

    times: np.ndarray
    u: np.ndarray              # shape (nt, *grid.shape)
    mass: np.ndarray
    terminal_index: int
    max_mass_drift: float
    min_u: float

    def field(self, i: int) -> np.ndarray:
        return self.u[i]


def _interp_comps(traj: FlowTrajectory, k: int):
    """Cubic interpolation of (metric comps, p) at the midpoint of
    interval [k, k+1]."""
    n = len(traj)
    if n < 4:
        raise ValueError("trajectory too short for cubic stage interpolation")
    if k == 0:
        base, w = 0, _W_LEFT
    elif k >= n - 2:
        base, w = n - 4, _W_RIGHT
    else:
        base, w = k - 1, _W_MID
    comps = None
    p = None
    for j in range(4):
        cj, pj = traj.raw(base + j)
        if comps is None:
            comps = w[j] * cj
            p = w[j] * pj
        else:
            comps = comps + w[j] * cj
            p = p + w[j] * pj
    return comps, p


def solve_backward(traj: FlowTrajectory, u_T: np.ndarray,
                   check_positivity: bool = True) -> ConjugateHeatSolution:
    """Integrate the conjugate heat equation backward over a trajectory.

    u_T is the terminal profile at the last trajectory time; it must be
    strictly positive (normalize it with :func:`normalize_mass` first if
    unit total mass is wanted).  Returns the solution on every snapshot
    time.  Raises :class:`PositivityLossError` naming the first time
    index where u drops below -1e-12 at any node.
    """
    grid = traj.grid
    u_T = np.asarray(u_T, dtype=np.float64)
    if u_T.shape != grid.shape:
        raise GridMismatchError(
            f"terminal data shape {u_T.shape} does not match grid {grid.shape}")
    if float(np.min(u_T)) <= 0.0:
        raise PositivityLossError("terminal data", time_index=len(traj) - 1,
                                  min_value=float(np.min(u_T)))

    m = traj.m
    dt = traj.dt
    nt = len(traj)
    u = np.empty((nt,) + grid.shape)
    mass = np.empty(nt)
    u[-1] = u_T

    comps_T, p_T = traj.raw(nt - 1)
    kern_hi = _StageKernel(grid, comps_T, p_T, m)
    mass[-1] = float(np.sum(u_T * kern_hi.sqrt_det)) * grid.cell_volume
    min_u = float(np.min(u_T))

    for k in range(nt - 2, -1, -1):
        # step from t_{k+1} down to t_k, i.e. forward in tau with dtau = dt
        comps_lo, p_lo = traj.raw(k)
        kern_lo = _StageKernel(grid, comps_lo, p_lo, m)
        comps_mid, p_mid = _interp_comps(traj, k)
        kern_mid = _StageKernel(grid, comps_mid, p_mid, m)

        uk = u[k + 1]
        k1 = kern_hi.rhs_backward(uk)
        k2 = kern_mid.rhs_backward(uk + 0.5 * dt * k1)
        k3 = kern_mid.rhs_backward(uk + 0.5 * dt * k2)
        k4 = kern_lo.rhs_backward(uk + dt * k3)
        unew = uk + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        u[k] = unew
        mass[k] = float(np.sum(unew * kern_lo.sqrt_det)) * grid.cell_volume
        mn = float(np.min(unew))
        min_u = min(min_u, mn)
        if check_positivity and mn < -1e-12:
            raise PositivityLossError("conjugate heat solution", time_index=k,
                                      min_value=mn)
        kern_hi = kern_lo

    drift = float(np.max(np.abs(mass - mass[-1]))) / abs(mass[-1])
    return ConjugateHeatSolution(times=traj.times.copy(), u=u, mass=mass,
                                 terminal_index=nt - 1,
                                 max_mass_drift=drift, min_u=min_u)


def gaussian_bump(grid, center=None, kappa: float = 40.0,
                  floor: float = 1.0) -> np.ndarray:
    """Smooth periodic bump exp(-kappa * dist^2) + floor.

    The squared distance uses the standard smooth periodic surrogate
    sum_a (L_a/pi)^2 sin^2(pi (x_a - c_a)/L_a), so the profile is C-inf
    on the torus and strictly positive.  Larger kappa localizes the bump
    and exercises the gradient terms in the entropies harder.
    """
    if center is None:
        center = tuple(L / 2 for L in grid.period)
    meshes = grid.meshes()
    dist2 = np.zeros(grid.shape)
    for a in range(grid.dim):
        L = grid.period[a]
        dist2 += (L / np.pi) ** 2 * np.sin(np.pi * (meshes[a] - center[a]) / L) ** 2
    return floor + np.exp(-kappa * dist2)


def normalize_mass(g: MetricField, u: np.ndarray) -> np.ndarray:
    """Scale u to unit total mass under g."""
    total = integrate(g, u)
    if total <= 0:
        raise PositivityLossError("mass normalization input", min_value=total)
    return np.asarray(u) / total
