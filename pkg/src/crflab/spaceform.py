"""Exact ODE reduction of the flow on hyperbolic space forms.

For metrics g = c(t) g_hyp with Rc(g_hyp) = -m g_hyp (the Einstein case),
every field is homogeneous, the elliptic pressure equation degenerates to
algebra, and the flow becomes a scalar ODE.  Writing beta = 1 - 1/c:

    Rc + m g = m beta g            =>  |Rc + m g|^2_g = m^2 (m+1) beta^2
    (m+1) p  = |Rc + m g|^2 / m    =>  p(c) = m beta^2            (>= 0)
    dc/dt    = -2 (p c + m (c-1))  =  -2 m (c-1)(2c-1) / c

c = 1 is the Einstein fixed point (p = 0, dc/dt = 0); its linearization
is -2m, so it attracts the basin c in (1/2, inf), while c0 < 1/2
collapses.  The space form is never meshed: Rc = -m g_hyp is an
algebraic input and vol_hyp an abstract positive constant.

The conjugate heat value is spatially constant and solves du/dt =
(m+1) p u; it is integrated *backward* from the terminal value carried by
the initial state (matching the grid pipeline, where terminal data at
t = T determines u).  Entropies reduce to

    E = u ln u vol(c),   W = 2 (m+1) u ln u vol(c),
    vol(c) = c^{(m+1)/2} vol_hyp.

Exact derivative bookkeeping, derived by differentiating the closed
forms (see the narrative derivation in demos/spaceform_ode.py):

    dW/dt = 2 m (m+1)^2 u vol(c) beta (beta - ln u)
    dE/dt =   m (m+1)   u vol(c) beta (beta - ln u)

For c != 1 these differ from the flow's four-term evolution formula
(whose surviving terms for constant u give 2 m (m+1)^2 beta^2 u vol);
the formula's derivation uses the constant-curvature constraint, which
g = c g_hyp violates off c = 1 (R = -m(m+1)/c).  Both values are
reported; monotonicity off the constraint is measured, not asserted as
a theorem.  With the backward-terminal convention ln u <= 0 on the whole
interval, so the measured dW/dt stays strictly positive for any
c0 in (1/2, inf), c0 != 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SpaceFormState", "SpaceFormSeries", "pressure_scalar",
           "crf_ode_rhs", "run_ode", "dW_dt_exact", "dW_dt_flow_formula",
           "dE_dt_exact", "dE_dt_flow_formula", "volume_of"]


@dataclass(frozen=True)
class SpaceFormState:
    """Homogeneous flow state: scale c, curvature index m, bookkeeping
    volume of the unit space form, and the (terminal) conjugate value u."""

    c: float
    m: int = 2
    vol_hyp: float = 1.0
    u: float = 1.0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError(f"scale c must be positive, got {self.c}")
        if self.u <= 0:
            raise ValueError(f"conjugate value u must be positive, got {self.u}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.vol_hyp <= 0:
            raise ValueError("vol_hyp must be positive")


def pressure_scalar(c: float, m: int) -> float:
    """p(c) = m (1 - 1/c)^2; the algebraic pressure of the reduction."""
    if c <= 0:
        raise ValueError(f"scale c must be positive, got {c}")
    beta = 1.0 - 1.0 / c
    return m * beta * beta


def crf_ode_rhs(state: SpaceFormState) -> float:
    """dc/dt = -2 (p c + m (c-1)) = -2 m (c-1)(2c-1)/c."""
    c, m = state.c, state.m
    return -2.0 * (pressure_scalar(c, m) * c + m * (c - 1.0))


def volume_of(c: float, m: int, vol_hyp: float) -> float:
    return c ** ((m + 1) / 2.0) * vol_hyp


def dW_dt_exact(c: float, u: float, m: int, vol_hyp: float) -> float:
    beta = 1.0 - 1.0 / c
    return (2.0 * m * (m + 1) ** 2 * u * volume_of(c, m, vol_hyp)
            * beta * (beta - np.log(u)))


def dE_dt_exact(c: float, u: float, m: int, vol_hyp: float) -> float:
    beta = 1.0 - 1.0 / c
    return (m * (m + 1) * u * volume_of(c, m, vol_hyp)
            * beta * (beta - np.log(u)))


def dW_dt_flow_formula(c: float, u: float, m: int, vol_hyp: float) -> float:
    """Surviving terms of the four-term evolution formula for constant u:
    (2 + 2/m) |Rc + mg|^2 u vol = 2 m (m+1)^2 beta^2 u vol."""
    beta = 1.0 - 1.0 / c
    return 2.0 * m * (m + 1) ** 2 * beta * beta * u * volume_of(c, m, vol_hyp)


def dE_dt_flow_formula(c: float, u: float, m: int, vol_hyp: float) -> float:
    """(m+1) p u vol, the entropy-rate formula's value for constant u."""
    return (m + 1) * pressure_scalar(c, m) * u * volume_of(c, m, vol_hyp)


@dataclass
class SpaceFormSeries:
    """Uniform-time series of the reduced flow and its entropies."""

    times: np.ndarray
    c: np.ndarray
    u: np.ndarray
    p: np.ndarray
    vol: np.ndarray
    E: np.ndarray
    W: np.ndarray
    mass: np.ndarray
    dW_exact: np.ndarray
    dW_flow_formula: np.ndarray
    dE_exact: np.ndarray
    dE_flow_formula: np.ndarray
    m: int
    vol_hyp: float

    def fd(self, series: np.ndarray) -> np.ndarray:
        """Centered differences at interior times (ends one-sided)."""
        dt = self.times[1] - self.times[0]
        out = np.empty_like(series)
        out[1:-1] = (series[2:] - series[:-2]) / (2 * dt)
        out[0] = (-3 * series[0] + 4 * series[1] - series[2]) / (2 * dt)
        out[-1] = (3 * series[-1] - 4 * series[-2] + series[-3]) / (2 * dt)
        return out


def _rk4_scalar(rhs, y0: float, nsteps: int, dt: float) -> np.ndarray:
    vals = np.empty(nsteps + 1)
    vals[0] = y0
    y = y0
    for k in range(nsteps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if y <= 0:
            raise ValueError(f"scale lost positivity at step {k + 1}")
        vals[k + 1] = y
    return vals


def run_ode(state0: SpaceFormState, T: float, dt: float) -> SpaceFormSeries:
    """Integrate the reduction: c forward from state0.c on [0, T], then the
    conjugate value backward from u(T) = state0.u on the reversed grid.

    The backward leg consumes c at half-step resolution so that the
    four-stage scheme sees exact midpoint coefficients; both legs are
    fourth order in dt.
    """
    m, vol_hyp = state0.m, state0.vol_hyp
    nsteps = int(round(T / dt))
    if nsteps < 2:
        raise ValueError("need at least two steps")

    def dc(c):
        return -2.0 * (pressure_scalar(c, m) * c + m * (c - 1.0))

    # dense forward pass at half resolution for stage-exact coefficients
    c_fine = _rk4_scalar(dc, state0.c, 2 * nsteps, dt / 2.0)
    c = c_fine[::2]

    # backward conjugate leg: du/dtau = -(m+1) p(c(T - tau)) u
    u = np.empty(nsteps + 1)
    u[-1] = state0.u
    for k in range(nsteps - 1, -1, -1):
        # tau step from T - t_{k+1} to T - t_k
        c_hi = c_fine[2 * k + 2]
        c_mid = c_fine[2 * k + 1]
        c_lo = c_fine[2 * k]
        rate = lambda cc, uu: -(m + 1) * pressure_scalar(cc, m) * uu
        uk = u[k + 1]
        k1 = rate(c_hi, uk)
        k2 = rate(c_mid, uk + 0.5 * dt * k1)
        k3 = rate(c_mid, uk + 0.5 * dt * k2)
        k4 = rate(c_lo, uk + dt * k3)
        u[k] = uk + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if u[k] <= 0:
            raise ValueError(f"conjugate value lost positivity at index {k}")

    times = np.arange(nsteps + 1) * dt
    p = np.array([pressure_scalar(ci, m) for ci in c])
    vol = np.array([volume_of(ci, m, vol_hyp) for ci in c])
    E = u * np.log(u) * vol
    W = 2.0 * (m + 1) * E
    return SpaceFormSeries(
        times=times, c=c, u=u, p=p, vol=vol, E=E, W=W, mass=u * vol,
        dW_exact=np.array([dW_dt_exact(ci, ui, m, vol_hyp)
                           for ci, ui in zip(c, u)]),
        dW_flow_formula=np.array([dW_dt_flow_formula(ci, ui, m, vol_hyp)
                                  for ci, ui in zip(c, u)]),
        dE_exact=np.array([dE_dt_exact(ci, ui, m, vol_hyp)
                           for ci, ui in zip(c, u)]),
        dE_flow_formula=np.array([dE_dt_flow_formula(ci, ui, m, vol_hyp)
                                  for ci, ui in zip(c, u)]),
        m=m, vol_hyp=vol_hyp)
