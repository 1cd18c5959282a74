"""Flow integrator tests: right-hand side algebra, convergence, checkpoints."""

import numpy as np
import pytest

from crflab import GridSpec, MetricField, SymTensorField
from crflab.checkpoint import CheckpointReader
from crflab.flow import crf_rhs, default_dt, run_flow, FlowTrajectory
from crflab.geometry import ricci, scalar_curvature
from crflab.pressure import solve_pressure

from conftest import sup


def test_rhs_flat_metric_chain(grid16):
    # flat delta with m = 2: Rc = 0, the pressure source is the constant
    # m(m+1) so p = m, and the velocity is -2(0 + (p+m) g) = -8 delta
    g = MetricField.flat(grid16)
    p = solve_pressure(g).p
    assert sup(p - 2.0) < 1e-12
    vel = crf_rhs(g, p)
    expected = -8.0 * g.comps
    assert sup(vel.comps - expected) < 1e-11


def test_rhs_einstein_injection_is_zero(curved16):
    # inject Rc = -m g synthetically: the Einstein fixed point
    m = 2
    fake_ric = SymTensorField(curved16.grid, -m * curved16.comps, copy=False)
    vel = crf_rhs(curved16, np.zeros(curved16.grid.shape), ric=fake_ric)
    assert vel.max_abs() == 0.0


def test_rhs_trace_identity(curved16, grid16):
    # tr_g(dg/dt) = -2 (R + (m+1)(p+m)) exactly
    m = 2
    rc = ricci(curved16)
    p = solve_pressure(curved16, rc).p
    vel = crf_rhs(curved16, p, rc)
    trace = np.einsum("...ij,...ij->...", curved16.inv_dense, vel.dense)
    expected = -2.0 * (scalar_curvature(curved16, rc) + (m + 1) * (p + m))
    assert sup(trace - expected) < 1e-10 * sup(expected)


def test_rhs_symmetric_by_storage(curved16):
    vel = crf_rhs(curved16, np.zeros(curved16.grid.shape))
    d = vel.dense
    assert np.array_equal(d, d.swapaxes(-1, -2))


def test_flow_requires_normalized_data(curved16):
    with pytest.raises(ValueError):
        run_flow(curved16, T=1e-3)


def test_step_halving_richardson(normalized12, grid12):
    dt = default_dt(grid12)
    T = 8 * dt

    def final(dt_run):
        traj = run_flow(normalized12, T=T, dt=dt_run, drift_ceiling=np.inf)
        assert traj.failure is None
        return traj.raw(len(traj) - 1)[0]

    ref = final(dt / 8)
    e1 = sup(final(dt) - ref)
    e2 = sup(final(dt / 2) - ref)
    assert e1 / e2 > 10.0  # fourth order gives ~16


def test_trajectory_diagnostics_recorded(pipeline12):
    traj, _ = pipeline12
    assert len(traj.diagnostics) == len(traj)
    for d in traj.diagnostics:
        assert d.min_p > -1e-8
        assert d.min_eig > 0.0
        assert np.isfinite(d.constraint_sup)
    assert traj.times[0] == 0.0
    assert np.allclose(np.diff(traj.times), traj.dt)


def test_pressure_positive_along_run(pipeline12):
    traj, _ = pipeline12
    assert min(d.min_p for d in traj.diagnostics) >= -1e-8


def test_drift_ceiling_aborts_with_marker(normalized12, grid12):
    dt = default_dt(grid12)
    traj = run_flow(normalized12, T=20 * dt, dt=dt, drift_ceiling=1e-9)
    assert traj.failure is not None
    assert traj.failure.reason == "constraint-drift"
    assert len(traj) >= 1  # partial trajectory returned


def test_checkpoint_roundtrip(pipeline12, tmp_path):
    traj, _ = pipeline12
    path = tmp_path / "traj.ckpt"
    traj.save_checkpoint(path)
    reader = CheckpointReader(path)
    assert reader.count == len(traj)
    assert reader.grid == traj.grid
    assert reader.m == traj.m
    for i in (0, len(traj) // 2, len(traj) - 1):
        t, dt, comps, p = reader.read_state(i)
        c0, p0 = traj.raw(i)
        assert t == traj.times[i]
        assert np.array_equal(comps, c0)
        assert np.array_equal(p, p0)
    lazy = FlowTrajectory.from_checkpoint(path)
    c0, p0 = traj.raw(3)
    c1, p1 = lazy.raw(3)
    assert np.array_equal(c0, c1) and np.array_equal(p0, p1)


def test_streamed_run_matches_memory(normalized12, grid12, tmp_path):
    dt = default_dt(grid12)
    mem = run_flow(normalized12, T=5 * dt, dt=dt, drift_ceiling=np.inf)
    disk = run_flow(normalized12, T=5 * dt, dt=dt, drift_ceiling=np.inf,
                    store_path=tmp_path / "stream.ckpt")
    assert np.array_equal(mem.raw(5)[0], disk.raw(5)[0])
    assert np.array_equal(mem.raw(5)[1], disk.raw(5)[1])


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTMAGIC" + b"\0" * 64)
    with pytest.raises(ValueError):
        CheckpointReader(path)
