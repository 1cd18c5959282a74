"""Shared fixtures: small grids and one cached flow pipeline.

The 12^3 pipeline (seed -> normalize -> short flow -> backward conjugate
solve) is session-scoped because half the test modules exercise pieces
of it; building it once keeps the suite fast.
"""

from __future__ import annotations

import numpy as np
import pytest

from crflab import GridSpec, MetricField
from crflab.conjugate import gaussian_bump, normalize_mass, solve_backward
from crflab.flow import default_dt, run_flow
from crflab.seeds import sheared_flat
from crflab.yamabe import normalize


@pytest.fixture(scope="session")
def grid8():
    return GridSpec(3, 8, 1.0)


@pytest.fixture(scope="session")
def grid12():
    return GridSpec(3, 12, 1.0)


@pytest.fixture(scope="session")
def grid16():
    return GridSpec(3, 16, 1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def curved16(grid16):
    """Smooth conformally flat metric for operator tests (no constraint)."""
    x, y, _ = grid16.meshes()
    phi = 0.05 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
    return MetricField.conformally_flat(grid16, phi)


@pytest.fixture(scope="session")
def normalized12(grid12):
    return normalize(sheared_flat(grid12, 0.4))


@pytest.fixture(scope="session")
def pipeline12(grid12, normalized12):
    """Short flow plus conjugate solution on the 12^3 grid."""
    dt = default_dt(grid12)
    traj = run_flow(normalized12, T=16 * dt, dt=dt, drift_ceiling=np.inf)
    assert traj.failure is None
    g_T = traj.state(len(traj) - 1).g
    u_T = normalize_mass(g_T, gaussian_bump(grid12, kappa=20.0))
    sol = solve_backward(traj, u_T)
    return traj, sol


def sup(a):
    return float(np.max(np.abs(a)))
