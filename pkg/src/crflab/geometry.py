"""Discrete Riemannian tensor calculus on periodic grids.

Curvature is assembled the classical way: Levi-Civita symbols from first
differences of the metric, Ricci from first differences of the symbols,
scalar curvature as the trace.  The Laplace-Beltrami operator is kept in
divergence form

    lap f = (1/sqrt(det g)) D_i( sqrt(det g) g^{ij} D_j f )

with the same fourth-order stencil ``D`` used everywhere.  Because ``D``
is antisymmetric under the periodic node sum, divergence-form output sums
to zero exactly and the discrete integration-by-parts identity

    integrate(g, f * lap h) = -integrate(g, <grad f, grad h>)

holds to round-off.  That exactness is load-bearing for the entropy
bookkeeping downstream, so do not swap in a compact second-derivative
stencil here.

The assembly paths work on packed symmetric components and batched 3x3
matmuls wherever possible; the flow integrator calls ricci() four times
per step, so per-call milliseconds matter at 32^3.

All per-node operations are pure functions of read-only inputs and are
safe to run concurrently on different fields.
"""

from __future__ import annotations

import numpy as np

from .fields import MetricField, SymTensorField, packed_index, sym_pairs, unpack_symmetric
from .grid import GridSpec, diff4, grad_components

__all__ = [
    "christoffel",
    "ricci",
    "scalar_curvature",
    "laplace_beltrami",
    "laplace_nondivergence",
    "hessian",
    "gradient",
    "gradient_sq",
    "grad_inner",
    "tensor_norm_sq",
    "divergence_vec",
    "integrate",
]


def _christoffel_packed(g: MetricField) -> np.ndarray:
    """Connection coefficients, packed in the symmetric lower pair.

    Returns ``gp[..., k, c]`` = Gamma^k_{ij} with c the packed (i, j)
    component.  Symmetry in (i, j) is exact by construction.
    """
    grid = g.grid
    n = grid.dim
    K = packed_index(n)
    pairs = sym_pairs(n)

    # dgp[..., a, c] = D_a g_c on packed components
    dgp = np.stack([diff4(g.comps, a, grid.spacing[a]) for a in range(n)], axis=-2)

    # T[..., l, c] = D_i g_{lj} + D_j g_{li} - D_l g_{ij}  for c = (i, j)
    i_of = np.array([p[0] for p in pairs])
    j_of = np.array([p[1] for p in pairs])
    l_idx = np.arange(n)[:, None]
    T = (dgp[..., i_of[None, :], K[l_idx, j_of[None, :]]]
         + dgp[..., j_of[None, :], K[l_idx, i_of[None, :]]]
         - dgp)
    # Gamma^k_c = 0.5 g^{kl} T_{lc}, batched matmul over nodes
    return 0.5 * np.matmul(g.inv_dense, T)


def christoffel(g: MetricField) -> np.ndarray:
    """Levi-Civita connection coefficients, shape ``(*grid, n, n, n)``.

    Component order is ``gamma[..., k, i, j]`` for Gamma^k_ij; symmetry in
    the lower pair is exact because the lower pair is stored packed during
    assembly.
    """
    gp = _christoffel_packed(g)
    return gp[..., packed_index(g.grid.dim)]


def ricci(g: MetricField, gamma_packed: np.ndarray | None = None) -> SymTensorField:
    """Ricci curvature from first differences of the connection.

    R_ij = D_k Gamma^k_ij - D_j Gamma^k_ki
           + Gamma^k_kl Gamma^l_ij - Gamma^k_jl Gamma^l_ki
    """
    grid = g.grid
    n = grid.dim
    h = grid.spacing
    K = packed_index(n)
    if gamma_packed is None:
        gamma_packed = _christoffel_packed(g)
    gp = gamma_packed

    # sum_a D_a Gamma^a_c : packed, exactly symmetric
    term1 = diff4(np.ascontiguousarray(gp[..., 0, :]), 0, h[0])
    for a in range(1, n):
        term1 += diff4(np.ascontiguousarray(gp[..., a, :]), a, h[a])

    # trace tr_i = Gamma^k_{ki} and its coordinate derivatives
    ks = np.arange(n)[:, None]
    tr = gp[..., ks, K[ks, np.arange(n)[None, :]]].sum(axis=-2)
    dtr = grad_components(grid, tr, stacked_axis=-2)  # [..., a, i] = D_a tr_i

    # symmetrized - D_j tr_i
    term2 = np.empty_like(term1)
    for c, (i, j) in enumerate(sym_pairs(n)):
        if i == j:
            term2[..., c] = dtr[..., j, i]
        else:
            term2[..., c] = 0.5 * (dtr[..., j, i] + dtr[..., i, j])

    # quad1_c = tr_l Gamma^l_c : packed
    quad1 = np.einsum("...l,...lc->...c", tr, gp)

    # quad2_ij = Gamma^k_{jl} Gamma^l_{ki} via batched matmul; exactly
    # symmetric up to round-off, packed with pair averaging
    gdense = gp[..., K]                                   # [..., k, i, j]
    P = np.ascontiguousarray(np.swapaxes(gdense, -3, -2))  # P[j, k, l]
    flat = P.reshape(P.shape[:-3] + (n, n * n))
    q2flat = np.matmul(flat, flat.reshape(P.shape[:-3] + (n * n, n)))
    quad2d = np.swapaxes(q2flat, -1, -2)                  # [..., i, j]
    quad2 = np.empty_like(term1)
    for c, (i, j) in enumerate(sym_pairs(n)):
        if i == j:
            quad2[..., c] = quad2d[..., i, j]
        else:
            quad2[..., c] = 0.5 * (quad2d[..., i, j] + quad2d[..., j, i])

    return SymTensorField(grid, term1 - term2 + quad1 - quad2, copy=False)


def scalar_curvature(g: MetricField, ric: SymTensorField | None = None) -> np.ndarray:
    if ric is None:
        ric = ricci(g)
    return _packed_contract(g.grid.dim, g.inv_comps, ric.comps)


def _packed_contract(n: int, a_comps: np.ndarray, b_comps: np.ndarray) -> np.ndarray:
    """Full contraction a^{ij} b_{ij} of two packed symmetric tensors."""
    weights = np.array([1.0 if i == j else 2.0 for (i, j) in sym_pairs(n)])
    return np.einsum("...c,...c,c->...", a_comps, b_comps, weights)


def laplace_beltrami(g: MetricField, f: np.ndarray) -> np.ndarray:
    """Divergence-form Laplace-Beltrami operator (see module docstring)."""
    grid = g.grid
    h = grid.spacing
    df = grad_components(grid, np.asarray(f), stacked_axis=-1)
    area = g.sqrt_det[..., None, None] * g.inv_dense
    flux = np.einsum("...ab,...b->...a", area, df)
    acc = diff4(flux[..., 0], 0, h[0])
    for a in range(1, grid.dim):
        acc += diff4(flux[..., a], a, h[a])
    return acc / g.sqrt_det


def laplace_nondivergence(g: MetricField, f: np.ndarray,
                          gamma: np.ndarray | None = None) -> np.ndarray:
    """Independent non-divergence form g^{ij} (D_i D_j f - Gamma^k_ij D_k f).

    Kept as a cross-check for the divergence form; the two agree up to
    truncation error, never exactly.
    """
    grid = g.grid
    if gamma is None:
        gamma = christoffel(g)
    df = grad_components(grid, np.asarray(f), stacked_axis=-1)
    d2 = _coordinate_hessian(grid, df)
    corr = np.einsum("...kij,...k->...ij", gamma, df)
    return np.einsum("...ij,...ij->...", g.inv_dense, d2 - corr)


def _coordinate_hessian(grid: GridSpec, df: np.ndarray) -> np.ndarray:
    """D_i D_j f from already-computed first derivatives df[..., a]."""
    h = grid.spacing
    n = grid.dim
    d2 = np.empty(df.shape[:-1] + (n, n))
    for i in range(n):
        for j in range(i, n):
            d2[..., i, j] = diff4(df[..., j], i, h[i])
            if j != i:
                d2[..., j, i] = d2[..., i, j]
    return d2


def hessian(g: MetricField, f: np.ndarray,
            gamma_packed: np.ndarray | None = None) -> SymTensorField:
    """Covariant Hessian D_i D_j f - Gamma^k_ij D_k f."""
    grid = g.grid
    n = grid.dim
    if gamma_packed is None:
        gamma_packed = _christoffel_packed(g)
    df = grad_components(grid, np.asarray(f), stacked_axis=-1)
    d2 = _coordinate_hessian(grid, df)
    corr = np.einsum("...kc,...k->...c", gamma_packed, df)
    comps = np.empty(gamma_packed.shape[:-2] + (gamma_packed.shape[-1],))
    for c, (i, j) in enumerate(sym_pairs(n)):
        comps[..., c] = d2[..., i, j]
    comps -= corr
    return SymTensorField(grid, comps, copy=False)


def gradient(g: MetricField, f: np.ndarray) -> np.ndarray:
    """Contravariant gradient g^{ij} D_j f, shape ``(*grid, n)``."""
    df = grad_components(g.grid, np.asarray(f), stacked_axis=-1)
    return np.einsum("...ij,...j->...i", g.inv_dense, df)


def gradient_sq(g: MetricField, f: np.ndarray) -> np.ndarray:
    """Squared gradient norm g^{ij} D_i f D_j f."""
    df = grad_components(g.grid, np.asarray(f), stacked_axis=-1)
    return np.einsum("...ij,...i,...j->...", g.inv_dense, df, df)


def grad_inner(g: MetricField, f: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Pointwise inner product of two gradients, g^{ij} D_i f D_j w."""
    df = grad_components(g.grid, np.asarray(f), stacked_axis=-1)
    dw = grad_components(g.grid, np.asarray(w), stacked_axis=-1)
    return np.einsum("...ij,...i,...j->...", g.inv_dense, df, dw)


def tensor_norm_sq(g: MetricField, T: SymTensorField) -> np.ndarray:
    """|T|^2_g = g^{ik} g^{jl} T_ij T_kl, nonnegative at every node."""
    mixed = np.matmul(g.inv_dense, T.dense)
    return np.einsum("...ij,...ji->...", mixed, mixed)


def divergence_vec(g: MetricField, X: np.ndarray) -> np.ndarray:
    """Divergence of a contravariant vector field X[..., a]."""
    grid = g.grid
    h = grid.spacing
    weighted = g.sqrt_det[..., None] * np.asarray(X)
    acc = diff4(weighted[..., 0], 0, h[0])
    for a in range(1, grid.dim):
        acc += diff4(weighted[..., a], a, h[a])
    return acc / g.sqrt_det


def integrate(g: MetricField, f: np.ndarray) -> float:
    """Riemannian integral: node sum of f * sqrt(det g) * cell volume.

    On a periodic uniform grid the plain Riemann sum is the trapezoidal
    rule, spectrally accurate for smooth integrands.
    """
    return float(np.sum(np.asarray(f) * g.sqrt_det)) * g.grid.cell_volume
