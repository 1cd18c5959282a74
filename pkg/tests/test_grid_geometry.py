"""Geometry kernel tests: curvature oracles, operator identities, quadrature."""

import numpy as np
import pytest

from crflab import GridSpec, MetricField, SymTensorField
from crflab.errors import DegenerateMetricError
from crflab.fields import min_eig_sym3, pack_symmetric, unpack_symmetric
from crflab.geometry import (christoffel, divergence_vec, grad_inner,
                             gradient_sq, hessian, integrate,
                             laplace_beltrami, laplace_nondivergence, ricci,
                             scalar_curvature, tensor_norm_sq)
from crflab.grid import diff4, grad_components

from conftest import sup


def conformal_metric(grid, amplitude=0.05):
    x, y, _ = grid.meshes()
    phi = amplitude * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
    return MetricField.conformally_flat(grid, phi), phi


def flat_ops(grid, phi):
    """Euclidean gradient/Laplacian of phi with the same stencils."""
    h = grid.spacing
    dphi = grad_components(grid, phi)
    lap = sum(diff4(dphi[..., a], a, h[a]) for a in range(grid.dim))
    return dphi, lap


# --- constant metrics have no curvature ------------------------------------

@pytest.mark.parametrize("scale", [1.0, 2.5])
def test_constant_metric_curvature_vanishes(grid16, scale):
    g = MetricField.flat(grid16, scale)
    assert sup(christoffel(g)) == 0.0
    assert ricci(g).max_abs() <= 1e-12
    assert sup(scalar_curvature(g)) <= 1e-12


# --- conformal closed-form oracles ------------------------------------------

def test_christoffel_conformal_oracle(grid16):
    g, phi = conformal_metric(grid16)
    gamma = christoffel(g)
    dphi, _ = flat_ops(grid16, phi)
    n = grid16.dim
    oracle = np.zeros(grid16.shape + (n, n, n))
    eye = np.eye(n)
    for k in range(n):
        for i in range(n):
            for j in range(n):
                oracle[..., k, i, j] = (eye[k, i] * dphi[..., j]
                                        + eye[k, j] * dphi[..., i]
                                        - eye[i, j] * dphi[..., k])
    # same-stencil closed form; discrepancy is pure chain-rule truncation
    assert sup(gamma - oracle) < 5e-4


def _ricci_oracle_error(N):
    grid = GridSpec(3, N, 1.0)
    g, phi = conformal_metric(grid)
    dphi, lap = flat_ops(grid, phi)
    h = grid.spacing
    n = 3
    hess = np.empty(grid.shape + (n, n))
    for i in range(n):
        for j in range(n):
            hess[..., i, j] = diff4(dphi[..., j], i, h[i])
    gsq = np.einsum("...a,...a->...", dphi, dphi)
    oracle = (-(n - 2) * (hess - np.einsum("...i,...j->...ij", dphi, dphi))
              - (lap + (n - 2) * gsq)[..., None, None] * np.eye(n))
    return sup(ricci(g).dense - oracle)


def _scalar_oracle_error(N):
    grid = GridSpec(3, N, 1.0)
    g, phi = conformal_metric(grid)
    dphi, lap = flat_ops(grid, phi)
    gsq = np.einsum("...a,...a->...", dphi, dphi)
    oracle = np.exp(-2 * phi) * (-4.0 * lap - 2.0 * gsq)
    return sup(scalar_curvature(g) - oracle)


def test_conformal_ricci_oracle_order():
    e16, e32 = _ricci_oracle_error(16), _ricci_oracle_error(32)
    assert e16 < 2e-2
    assert np.log2(e16 / e32) >= 3.5


def test_conformal_scalar_oracle_order():
    e16, e32 = _scalar_oracle_error(16), _scalar_oracle_error(32)
    assert e16 < 2e-2
    assert np.log2(e16 / e32) >= 3.5


# --- Laplace-Beltrami -------------------------------------------------------

def test_laplacian_constant_is_zero(curved16, grid16):
    assert sup(laplace_beltrami(curved16, np.full(grid16.shape, 3.7))) == 0.0


def test_laplacian_flat_eigenfunction(grid16):
    g = MetricField.flat(grid16)
    x = grid16.meshes()[0]
    k = grid16.wavenumber(0)
    f = np.sin(k * x)
    # stencil symbol, not the continuum eigenvalue
    h = grid16.spacing[0]
    s_k = (8 * np.sin(k * h) - np.sin(2 * k * h)) / (6 * h)
    assert sup(laplace_beltrami(g, f) + s_k ** 2 * f) < 1e-12
    assert sup(laplace_beltrami(g, f) + k ** 2 * f) < 0.1


def test_laplacian_dual_formulation(curved16, grid16):
    x, y, z = grid16.meshes()
    f = np.sin(2 * np.pi * x) + 0.4 * np.cos(2 * np.pi * z)
    a = laplace_beltrami(curved16, f)
    b = laplace_nondivergence(curved16, f)
    assert sup(a - b) < 5e-2
    # refinement-decaying
    grid32 = GridSpec(3, 32, 1.0)
    g32, _ = conformal_metric(grid32)
    x2, _, z2 = grid32.meshes()
    f2 = np.sin(2 * np.pi * x2) + 0.4 * np.cos(2 * np.pi * z2)
    e32 = sup(laplace_beltrami(g32, f2) - laplace_nondivergence(g32, f2))
    assert e32 < sup(a - b) / 8


def test_divergence_theorem_exact(curved16, grid16, rng):
    f = rng.standard_normal(grid16.shape)
    val = integrate(curved16, laplace_beltrami(curved16, f))
    assert abs(val) < 1e-10 * sup(f)


def test_integration_by_parts_exact(curved16, grid16, rng):
    f = rng.standard_normal(grid16.shape)
    w = rng.standard_normal(grid16.shape)
    lhs = integrate(curved16, w * laplace_beltrami(curved16, f))
    rhs = -integrate(curved16, grad_inner(curved16, w, f))
    assert abs(lhs - rhs) < 1e-10 * (1 + abs(lhs))


# --- pointwise contractions -------------------------------------------------

def test_hessian_of_constant(curved16, grid16):
    assert hessian(curved16, np.full(grid16.shape, 2.0)).max_abs() == 0.0


def test_metric_norm_is_dimension(curved16):
    assert sup(tensor_norm_sq(curved16, curved16) - 3.0) < 1e-12


def test_tensor_norm_nonnegative(curved16, grid16, rng):
    T = SymTensorField.from_dense(
        grid16, rng.standard_normal(grid16.shape + (3, 3)))
    assert float(np.min(tensor_norm_sq(curved16, T))) >= 0.0


def test_gradient_sq_flat_analytic(grid16):
    g = MetricField.flat(grid16)
    x = grid16.meshes()[0]
    k = grid16.wavenumber(0)
    f = np.sin(k * x)
    # same-stencil analytic value
    h = grid16.spacing[0]
    s_k = (8 * np.sin(k * h) - np.sin(2 * k * h)) / (6 * h)
    assert sup(gradient_sq(g, f) - (s_k * np.cos(k * x)) ** 2) < 1e-12
    assert sup(gradient_sq(g, f) - (k * np.cos(k * x)) ** 2) < 0.1


def test_divergence_of_gradient_matches_laplacian(curved16, grid16, rng):
    f = rng.standard_normal(grid16.shape)
    from crflab.geometry import gradient
    X = gradient(curved16, f)
    assert sup(divergence_vec(curved16, X) - laplace_beltrami(curved16, f)) < 1e-12


# --- quadrature --------------------------------------------------------------

def test_integrate_unit_flat(grid16):
    assert integrate(MetricField.flat(grid16), np.ones(grid16.shape)) == pytest.approx(1.0)


def test_integrate_volume_scaling(grid16):
    c = 2.5
    g = MetricField.flat(grid16, c)
    val = integrate(g, np.ones(grid16.shape))
    assert val == pytest.approx(c ** 1.5, rel=1e-13)


def test_integrate_self_convergence():
    # the periodic Riemann sum is the trapezoidal rule: on smooth
    # integrands it converges faster than any power of h, so doubled
    # resolution agrees far inside the O(h^4) budget (at round-off here)
    def value(N):
        grid = GridSpec(3, N, 1.0)
        g, phi = conformal_metric(grid, amplitude=0.1)
        x = grid.meshes()[0]
        return integrate(g, np.exp(np.sin(2 * np.pi * x)))
    v16, v32, v64 = value(16), value(32), value(64)
    assert abs(v16 - v32) < 1e-12
    assert abs(v32 - v64) < 1e-12


# --- storage and validation --------------------------------------------------

def test_pack_unpack_roundtrip(rng):
    dense = rng.standard_normal((4, 4, 4, 3, 3))
    dense = dense + dense.swapaxes(-1, -2)
    assert np.array_equal(unpack_symmetric(pack_symmetric(dense), 3), dense)


def test_min_eig_closed_form_matches_lapack(rng):
    a = rng.standard_normal((500, 3, 3))
    spd = np.einsum("...ij,...kj->...ik", a, a) + 0.1 * np.eye(3)
    packed = pack_symmetric(spd)
    lam = min_eig_sym3(packed)
    ref = np.linalg.eigvalsh(spd)[..., 0]
    assert sup(lam - ref) < 1e-10


def test_degenerate_metric_rejected(grid16):
    comps = MetricField.flat(grid16).comps.copy()
    comps[3, 5, 7, 0] = -1.0
    with pytest.raises(DegenerateMetricError) as exc:
        MetricField(grid16, comps)
    assert exc.value.node == (3, 5, 7)


def test_fields_are_immutable(curved16):
    with pytest.raises(ValueError):
        curved16.comps[0, 0, 0, 0] = 5.0
