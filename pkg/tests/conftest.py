"""Shared fixtures and finite-difference helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from ninfem.mesh import build_box_mesh


def central_fd(f, x, eps=1e-6):
    """Central finite-difference gradient of scalar f at flat array x."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (f(xp) - f(xm)) / (2.0 * eps)
    return g


def central_fd_jacobian(f, x, eps=1e-6):
    """Central finite-difference Jacobian of vector f at flat array x."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x))
    J = np.zeros((f0.size, x.size))
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += eps
        xm[i] -= eps
        J[:, i] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * eps)
    return J


def random_deformation_gradients(n, dim, scale=0.2, seed=0):
    """Random F = I + scale*G, resampled until all det(F) > 0.2."""
    rng = np.random.default_rng(seed)
    out = np.empty((n, dim, dim))
    count = 0
    while count < n:
        F = np.eye(dim) + scale * rng.standard_normal((n, dim, dim))
        keep = np.linalg.det(F) > 0.2
        take = min(keep.sum(), n - count)
        out[count : count + take] = F[keep][:take]
        count += take
    return out


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def mesh2d():
    return build_box_mesh(2, (1.0, 1.0), (3, 3))


@pytest.fixture
def mesh3d():
    return build_box_mesh(3, (1.0, 1.0, 1.0), (3, 3, 3))
