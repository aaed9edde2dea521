"""Newton-Raphson solver with load increments and pluggable linear solvers."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ninfem.assembly import DofState, apply_dirichlet, constrain_system
from ninfem.material import InvertedElementError
from ninfem.mesh import ConfigurationError


class LinearSolverError(RuntimeError):
    """Iterative linear solver failed to reach its tolerance."""


class NewtonFailure(RuntimeError):
    """Newton did not converge within the divergence policy's budget."""

    def __init__(self, message: str, report: "NewtonReport"):
        super().__init__(message)
        self.report = report


@dataclass
class NewtonConfig:
    tol: float = 1e-6
    max_iters: int = 25
    n_increments: int = 1
    linear_solver: str = "direct"  # "direct" | "bicgstab"
    bicgstab_rel_tol: float = 1e-10
    bicgstab_max_it: int = 2000
    preconditioner: str = "jacobi"  # "jacobi" | "ilu" | "none"
    max_bisections: int = 4

    def __post_init__(self):
        if self.tol <= 0:
            raise ConfigurationError("tol must be positive")
        if self.n_increments < 1:
            raise ConfigurationError("n_increments must be >= 1")


@dataclass
class IncrementRecord:
    load_scale: float
    iterations: int
    residual_norms: list[float]


@dataclass
class NewtonReport:
    increments: list[IncrementRecord] = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0
    failure_reason: str = ""

    @property
    def total_iterations(self) -> int:
        return sum(inc.iterations for inc in self.increments)

    def csv_rows(self) -> list[tuple[int, int, float]]:
        """(increment, iter, residual_norm) rows; iter 0 is the entry residual."""
        rows = []
        for n, inc in enumerate(self.increments, start=1):
            for k, rn in enumerate(inc.residual_norms):
                rows.append((n, k, rn))
        return rows


def linear_solve(
    K: sp.csr_matrix,
    rhs: np.ndarray,
    method: str = "direct",
    rel_tol: float = 1e-10,
    max_it: int = 2000,
    preconditioner: str = "jacobi",
) -> np.ndarray:
    """Solve K x = rhs by sparse LU or preconditioned BiCGSTAB."""
    if method == "direct":
        return spla.spsolve(K.tocsc(), rhs)
    if method != "bicgstab":
        raise ConfigurationError(f"unknown linear solver '{method}'")
    M = None
    if preconditioner == "jacobi":
        diag = K.diagonal()
        if np.any(diag == 0):
            raise LinearSolverError("zero diagonal entry; Jacobi unusable")
        M = spla.LinearOperator(K.shape, matvec=lambda x: x / diag)
    elif preconditioner == "ilu":
        ilu = spla.spilu(K.tocsc())
        M = spla.LinearOperator(K.shape, matvec=ilu.solve)
    elif preconditioner != "none":
        raise ConfigurationError(f"unknown preconditioner '{preconditioner}'")
    x, info = spla.bicgstab(K, rhs, rtol=rel_tol, maxiter=max_it, M=M)
    if info != 0:
        raise LinearSolverError(f"BiCGSTAB did not converge (info={info})")
    return x


def _free_norm(r: np.ndarray, mask: np.ndarray) -> float:
    return float(np.linalg.norm(r[~mask]))


def _newton_increment(problem, U, load_scale, config, record):
    """Iterate at fixed load scale; returns the updated U. Raises on failure."""
    mask = problem.dirichlet_mask
    U = apply_dirichlet(U, mask, problem.dirichlet_values, load_scale)
    r = problem.residual(U, load_scale)
    norm = _free_norm(r, mask)
    record.residual_norms.append(norm)
    while norm >= config.tol:
        if record.iterations >= config.max_iters:
            raise NewtonFailure("max_iters exceeded", None)
        if not np.isfinite(norm):
            raise NewtonFailure("residual diverged", None)
        K = problem.tangent(U, load_scale)
        K_mod, rhs = constrain_system(K, r, mask)
        dU = linear_solve(
            K_mod,
            rhs,
            method=config.linear_solver,
            rel_tol=config.bicgstab_rel_tol,
            max_it=config.bicgstab_max_it,
            preconditioner=config.preconditioner,
        )
        U = U + dU
        record.iterations += 1
        r = problem.residual(U, load_scale)
        norm = _free_norm(r, mask)
        record.residual_norms.append(norm)
    return U


def solve(
    problem,
    config: NewtonConfig,
    initial_guess: np.ndarray | None = None,
) -> tuple[DofState, NewtonReport]:
    """Algorithmic core: load increments around a Newton loop.

    ``problem`` must expose ``residual(U, load_scale)``, ``tangent(U,
    load_scale)``, ``dirichlet_mask``, ``dirichlet_values`` and ``n_dof``.
    On increment failure the increment is bisected up to
    ``config.max_bisections`` times before aborting with
    :class:`NewtonFailure` carrying the partial report.
    """
    t0 = time.perf_counter()
    report = NewtonReport()
    U = (
        np.zeros(problem.n_dof)
        if initial_guess is None
        else np.array(initial_guess, dtype=float, copy=True)
    )
    mask = problem.dirichlet_mask

    targets = [n / config.n_increments for n in range(1, config.n_increments + 1)]
    current = 0.0
    bisections = 0
    while targets:
        target = targets[0]
        record = IncrementRecord(load_scale=target, iterations=0, residual_norms=[])
        try:
            U_new = _newton_increment(problem, U, target, config, record)
        except (NewtonFailure, InvertedElementError, LinearSolverError) as exc:
            report.increments.append(record)
            if isinstance(exc, LinearSolverError):
                report.failure_reason = f"linear solver breakdown: {exc}"
                report.wall_time = time.perf_counter() - t0
                raise NewtonFailure(report.failure_reason, report) from exc
            if bisections >= config.max_bisections:
                report.failure_reason = f"increment failed after {bisections} bisections"
                report.wall_time = time.perf_counter() - t0
                raise NewtonFailure(report.failure_reason, report) from exc
            bisections += 1
            targets.insert(0, 0.5 * (current + target))
            continue
        report.increments.append(record)
        U = U_new
        current = target
        targets.pop(0)

    report.converged = True
    report.wall_time = time.perf_counter() - t0
    state = DofState(U, mask, problem.dirichlet_values, load_scale=1.0)
    return state, report


def solve_thermomech(
    problem,
    config: NewtonConfig,
    initial_guess: np.ndarray | None = None,
) -> tuple[DofState, NewtonReport]:
    """Staggered solve exploiting one-way coupling.

    Newton on the (nonlinear) conduction residual first, then a single
    linear mechanical solve at the converged temperature.  The report
    aggregates both phases; the mechanical solve contributes one increment.
    """
    t0 = time.perf_counter()
    mesh = problem.mesh
    X0 = (
        np.zeros(problem.n_dof)
        if initial_guess is None
        else np.array(initial_guess, dtype=float, copy=True)
    )
    U0, T0 = problem.split(X0)
    mask_U, mask_T = problem.split(problem.dirichlet_mask.astype(float))
    vals_U, vals_T = problem.split(problem.dirichlet_values)
    mask_U = mask_U.astype(bool)
    mask_T = mask_T.astype(bool)

    from ninfem.assembly import ThermalProblem  # local import avoids a cycle

    thermal = ThermalProblem(
        mesh=mesh,
        k0_gp=problem.phi_gp,
        b=problem.params.b,
        c=problem.params.c,
        dirichlet_mask=mask_T,
        dirichlet_values=vals_T,
        geom=problem.geom,
    )
    T_state, report = solve(thermal, config, initial_guess=T0)
    T = T_state.U

    # Mechanical phase: linear in U at fixed T, one Newton step suffices.
    mech = _MechanicalAtFixedT(problem, T, mask_U, vals_U)
    mech_config = NewtonConfig(
        tol=config.tol,
        max_iters=config.max_iters,
        n_increments=1,
        linear_solver=config.linear_solver,
        bicgstab_rel_tol=config.bicgstab_rel_tol,
        bicgstab_max_it=config.bicgstab_max_it,
        preconditioner=config.preconditioner,
    )
    U_state, mech_report = solve(mech, mech_config, initial_guess=U0)
    report.increments.extend(mech_report.increments)
    report.converged = report.converged and mech_report.converged
    report.wall_time = time.perf_counter() - t0

    X = problem.merge(U_state.U, T)
    state = DofState(X, problem.dirichlet_mask, problem.dirichlet_values, 1.0)
    return state, report


class _MechanicalAtFixedT:
    """Adapter exposing the mechanical sub-problem at a frozen temperature."""

    def __init__(self, problem, T, mask_U, vals_U):
        self._p = problem
        self._T = T
        self.dirichlet_mask = mask_U
        self.dirichlet_values = vals_U
        self.n_dof = problem.mesh.n_nodes * problem.mesh.dim

    def residual(self, U, load_scale=1.0):
        from ninfem.assembly import thermomech_mechanical_force

        p = self._p
        r = thermomech_mechanical_force(
            p.geom, p.mesh.elements, U, self._T, p.phi_gp, p.params, p.mesh.dim
        )
        mask = self.dirichlet_mask
        r[mask] = U[mask] - load_scale * self.dirichlet_values[mask]
        return r

    def tangent(self, U, load_scale=1.0):
        from ninfem.assembly import (
            dof_indices,
            scatter_matrix,
            thermomech_element_tangents,
        )

        p = self._p
        K_e = thermomech_element_tangents(
            p.geom, p.mesh.elements, self._T, p.phi_gp, p.params, p.mesh.dim
        )
        idx = dof_indices(p.mesh.elements, p.mesh.dim)
        return scatter_matrix(K_e, idx, self.n_dof)
