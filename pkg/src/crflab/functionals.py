"""Entropy functionals along the flow and their evolution formulas.

Two functionals of a positive density u on an evolving metric:

    E(g, u) = integral u ln u dmu            (Boltzmann-Shannon entropy)
    W(g, u) = integral (|grad ln u|^2 + 2(m+1) ln u) u dmu

Both are nondecreasing along the coupled flow when u solves the
conjugate heat equation, with explicit derivative formulas:

    dE/dt = integral (|grad ln u|^2 + (m+1) p) u dmu
    dW/dt = 2 I[|Rc + mg - hess(ln u)|^2] + (2/m) I[|Rc + mg|^2]
            + 2 I[|grad ln u|^2 p] + 2 I[|grad ln u|^2]     (I[q] = ∫ q u dmu)

whose four terms are individually nonnegative (pressure positivity gives
the third).  This module evaluates the functionals, the formulas with
their term breakdown, centered finite differences along a trajectory for
comparison, and the metric functional

    nu(g) = inf { W(g, e^{-f}) : integral e^{-f} dmu = 1 }

by multi-start projected gradient descent, the constraint re-imposed
after each step by the shift f -> f + ln integral e^{-f} dmu.

Everything integrates through geometry.integrate; no private quadrature
rules.  Evaluations at different times are independent and safe to run
concurrently; optimizer starts may run on a thread pool.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .conjugate import ConjugateHeatSolution
from .errors import PositivityLossError
from .fields import MetricField, SymTensorField
from .flow import FlowTrajectory
from .geometry import (grad_components, gradient_sq, hessian, integrate,
                       ricci, tensor_norm_sq)
from .grid import diff4

__all__ = [
    "entropy_E", "entropy_W", "entropy_W_f",
    "dE_dt_analytic", "dW_dt_analytic", "DWBreakdown",
    "entropy_lower_bound_gap",
    "FunctionalReport", "build_report",
    "NuConfig", "NuResult", "nu_functional", "w_gradient_f",
]


def _check_positive(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    mn = float(np.min(u))
    if mn <= 0.0:
        raise PositivityLossError("density", min_value=mn)
    return u


def entropy_E(g: MetricField, u: np.ndarray) -> float:
    u = _check_positive(u)
    return integrate(g, u * np.log(u))


def entropy_W(g: MetricField, u: np.ndarray) -> float:
    u = _check_positive(u)
    lnu = np.log(u)
    return integrate(g, (gradient_sq(g, lnu) + 2.0 * g.grid.dim * lnu) * u)


def entropy_W_f(g: MetricField, f: np.ndarray) -> float:
    """W in the potential form: integral (|grad f|^2 - 2(m+1) f) e^{-f} dmu.

    Identical node-by-node to entropy_W(g, e^{-f}); kept separate because
    the nu optimizer works in f throughout.
    """
    f = np.asarray(f, dtype=np.float64)
    return integrate(g, (gradient_sq(g, f) - 2.0 * g.grid.dim * f) * np.exp(-f))


def dE_dt_analytic(g: MetricField, u: np.ndarray, p: np.ndarray) -> float:
    """Evolution rate of E: integral (|grad ln u|^2 + (m+1) p) u dmu."""
    u = _check_positive(u)
    m = g.grid.dim - 1
    return integrate(g, (gradient_sq(g, np.log(u)) + (m + 1) * np.asarray(p)) * u)


@dataclass
class DWBreakdown:
    """Four-term split of the W evolution formula; total = their sum."""

    hessian_term: float      # 2 ∫ |Rc + mg - hess ln u|^2 u
    einstein_term: float     # (2/m) ∫ |Rc + mg|^2 u
    pressure_term: float     # 2 ∫ |grad ln u|^2 p u
    fisher_term: float       # 2 ∫ |grad ln u|^2 u

    @property
    def total(self) -> float:
        return (self.hessian_term + self.einstein_term
                + self.pressure_term + self.fisher_term)

    @property
    def terms(self) -> tuple[float, float, float, float]:
        return (self.hessian_term, self.einstein_term,
                self.pressure_term, self.fisher_term)

    @property
    def min_term(self) -> float:
        return min(self.terms)


def dW_dt_analytic(g: MetricField, u: np.ndarray, p: np.ndarray,
                   ric: SymTensorField | None = None) -> DWBreakdown:
    """Evolution rate of W with its four-term breakdown.

    ``ric`` may carry a precomputed (or synthetic) Ricci tensor; report
    builders pass the one already computed for the flow diagnostics.
    """
    u = _check_positive(u)
    grid = g.grid
    m = grid.dim - 1
    if ric is None:
        ric = ricci(g)
    lnu = np.log(u)
    shifted = SymTensorField(grid, ric.comps + m * g.comps, copy=False)
    defect = SymTensorField(grid, shifted.comps - hessian(g, lnu).comps, copy=False)
    gsq = gradient_sq(g, lnu)
    return DWBreakdown(
        hessian_term=2.0 * integrate(g, tensor_norm_sq(g, defect) * u),
        einstein_term=(2.0 / m) * integrate(g, tensor_norm_sq(g, shifted) * u),
        pressure_term=2.0 * integrate(g, gsq * np.asarray(p) * u),
        fisher_term=2.0 * integrate(g, gsq * u),
    )


def entropy_lower_bound_gap(g: MetricField, f: np.ndarray) -> float:
    """Slack of W(g, e^{-f}) >= ∫(|grad f|^2 + f) e^{-f} dmu - (2m+3)/e * vol.

    The bound assembles pointwise from x e^{-x} <= 1/e, so the slack is
    nonnegative for every admissible f up to round-off.
    """
    f = np.asarray(f, dtype=np.float64)
    m = g.grid.dim - 1
    lhs = entropy_W_f(g, f)
    rhs = (integrate(g, (gradient_sq(g, f) + f) * np.exp(-f))
           - (2 * m + 3) * np.exp(-1.0) * g.volume())
    return lhs - rhs


@dataclass
class FunctionalReport:
    """Per-time functional values and derivative comparisons for a run.

    Finite differences are centered at interior times and one-sided
    second order at the ends, on the trajectory's own time grid.
    """

    times: np.ndarray
    E: np.ndarray
    W: np.ndarray
    dE_fd: np.ndarray
    dE_analytic: np.ndarray
    dW_fd: np.ndarray
    dW_analytic: np.ndarray
    terms: np.ndarray            # shape (nt, 4)
    min_p: np.ndarray
    constraint_drift: np.ndarray
    mass: np.ndarray
    min_metric_eig: np.ndarray

    def interior(self) -> slice:
        return slice(1, len(self.times) - 1)

    def rel_mismatch(self, which: str = "W") -> np.ndarray:
        """|fd - analytic| / |analytic| at interior times."""
        s = self.interior()
        if which == "W":
            fd, an = self.dW_fd[s], self.dW_analytic[s]
        else:
            fd, an = self.dE_fd[s], self.dE_analytic[s]
        return np.abs(fd - an) / np.abs(an)


def _fd_series(vals: np.ndarray, dt: float) -> np.ndarray:
    out = np.empty_like(vals)
    out[1:-1] = (vals[2:] - vals[:-2]) / (2.0 * dt)
    out[0] = (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * dt)
    out[-1] = (3.0 * vals[-1] - 4.0 * vals[-2] + vals[-3]) / (2.0 * dt)
    return out


def build_report(traj: FlowTrajectory, sol: ConjugateHeatSolution) -> FunctionalReport:
    """Evaluate both entropies and their formulas over a whole run."""
    nt = len(traj)
    E = np.empty(nt)
    W = np.empty(nt)
    dE_an = np.empty(nt)
    dW_an = np.empty(nt)
    terms = np.empty((nt, 4))
    for i in range(nt):
        st = traj.state(i)
        u = sol.field(i)
        E[i] = entropy_E(st.g, u)
        W[i] = entropy_W(st.g, u)
        dE_an[i] = dE_dt_analytic(st.g, u, st.p)
        bd = dW_dt_analytic(st.g, u, st.p)
        dW_an[i] = bd.total
        terms[i] = bd.terms
    return FunctionalReport(
        times=traj.times.copy(), E=E, W=W,
        dE_fd=_fd_series(E, traj.dt), dE_analytic=dE_an,
        dW_fd=_fd_series(W, traj.dt), dW_analytic=dW_an,
        terms=terms,
        min_p=np.array([d.min_p for d in traj.diagnostics]),
        constraint_drift=np.array([d.constraint_sup for d in traj.diagnostics]),
        mass=sol.mass.copy(),
        min_metric_eig=np.array([d.min_eig for d in traj.diagnostics]),
    )


# ---------------------------------------------------------------------------
# nu functional: constrained minimization of W(g, e^{-f}) over f


@dataclass
class NuConfig:
    starts: int = 5
    max_iters: int = 400
    grad_tol: float = 1e-7      # volume-weighted gradient norm
    step0: float = 0.5
    armijo: float = 1e-4
    seed: int = 20240
    perturbation: float = 0.5   # amplitude of random low-mode starts
    workers: int = 1


@dataclass
class NuResult:
    value: float
    minimizer_f: np.ndarray
    constraint_error: float
    grad_norm: float
    iterations: int
    converged: bool
    start_values: list[float] = field(default_factory=list)

    @property
    def start_spread(self) -> float:
        return max(self.start_values) - min(self.start_values)


def _project(g: MetricField, f: np.ndarray) -> np.ndarray:
    """Shift f so that integral e^{-f} dmu = 1 exactly."""
    return f + np.log(integrate(g, np.exp(-f)))


def w_gradient_f(g: MetricField, f: np.ndarray) -> np.ndarray:
    """Exact gradient field of f -> W(g, e^{-f}) for the discrete quadrature.

    Defined by dW[df] = integrate(g, grad * df); assembled by
    differentiating the discrete objective itself (summation by parts is
    exact for the antisymmetric stencil), so directional finite
    differences of entropy_W_f match to round-off.
    """
    grid = g.grid
    m = grid.dim - 1
    f = np.asarray(f, dtype=np.float64)
    ef = np.exp(-f)
    df = grad_components(grid, f, stacked_axis=-1)
    # divergence of (e^{-f} grad f) against the quadrature weight
    flux = np.einsum("...ab,...b->...a",
                     g.sqrt_det[..., None, None] * g.inv_dense, df) * ef[..., None]
    acc = diff4(flux[..., 0], 0, grid.spacing[0])
    for a in range(1, grid.dim):
        acc += diff4(flux[..., a], a, grid.spacing[a])
    div_term = acc / g.sqrt_det
    gsq = np.einsum("...ij,...i,...j->...", g.inv_dense, df, df)
    return -2.0 * div_term - (gsq - 2.0 * (m + 1) * f) * ef - 2.0 * (m + 1) * ef


def _descend(g: MetricField, f0: np.ndarray, cfg: NuConfig):
    """Projected descent with backtracking; the raw gradient runs through
    an inverse-Helmholtz preconditioner (the objective's Hessian is
    dominated by -2 e^{-f} lap, so this keeps the step count flat in the
    grid size)."""
    from .pressure import solve_helmholtz

    m = g.grid.dim - 1
    f = _project(g, f0)
    val = entropy_W_f(g, f)
    step = cfg.step0
    iters = 0
    gnorm = np.inf
    for iters in range(1, cfg.max_iters + 1):
        raw = w_gradient_f(g, f)
        # reduced gradient of the shift-projected objective: the constant
        # re-normalization makes the effective gradient
        #   G - (integral G dmu) e^{-f}
        grad = raw - integrate(g, raw) * np.exp(-f)
        gnorm = float(np.sqrt(max(integrate(g, grad * grad), 0.0)))
        if gnorm < cfg.grad_tol:
            break
        direction = solve_helmholtz(g, grad, float(2 * (m + 1)),
                                    rtol=1e-8, atol=1e-14 * max(gnorm, 1.0)).p
        dmax = float(np.abs(direction).max())
        if dmax > 2.0:
            direction *= 2.0 / dmax
        slope = integrate(g, grad * direction)
        if slope <= 0.0:
            direction = grad
            slope = gnorm ** 2
        accepted = False
        while step > 1e-14:
            trial_raw = f - step * direction
            if float(np.abs(trial_raw).max()) < 50.0:
                trial = _project(g, trial_raw)
                tval = entropy_W_f(g, trial)
                if tval <= val - cfg.armijo * step * slope:
                    f, val = trial, tval
                    accepted = True
                    step = min(step * 1.5, 4.0)
                    break
            step *= 0.5
        if not accepted:
            break
    return val, f, gnorm, iters


def nu_functional(g: MetricField, starts: int | None = None,
                  cfg: NuConfig | None = None) -> NuResult:
    """Lowest W(g, e^{-f}) over unit-mass densities, by multi-start descent.

    The first start is the admissible constant f = ln vol(g); the rest
    perturb it with seeded low-mode trigonometric fields.  Whether the
    discrete infimum is attained is not established theory, so the result
    reports the best found value together with optimizer diagnostics
    (per-start values, final gradient norm, constraint error) and a
    converged flag instead of a claim.
    """
    if cfg is None:
        cfg = NuConfig()
    if starts is not None:
        cfg = NuConfig(**{**cfg.__dict__, "starts": starts})
    grid = g.grid
    rng = np.random.default_rng(cfg.seed)
    vol = g.volume()
    f_const = np.full(grid.shape, np.log(vol))

    starts_list = [f_const]
    meshes = grid.meshes()
    for _ in range(cfg.starts - 1):
        pert = np.zeros(grid.shape)
        for a in range(grid.dim):
            amp = cfg.perturbation * rng.standard_normal(2)
            phase = rng.uniform(0, 2 * np.pi, 2)
            k = grid.wavenumber(a)
            pert += amp[0] * np.sin(k * meshes[a] + phase[0])
            pert += amp[1] * np.cos(2 * k * meshes[a] + phase[1])
        starts_list.append(f_const + pert)

    def solve_one(f0):
        return _descend(g, f0, cfg)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(solve_one, starts_list))
    else:
        results = [solve_one(f0) for f0 in starts_list]

    vals = [r[0] for r in results]
    best = int(np.argmin(vals))
    val, f, gnorm, iters = results[best]
    constraint = abs(integrate(g, np.exp(-f)) - 1.0)
    return NuResult(value=val, minimizer_f=f, constraint_error=constraint,
                    grad_norm=gnorm, iterations=iters,
                    converged=gnorm < cfg.grad_tol * 10, start_values=vals)
