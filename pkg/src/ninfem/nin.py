"""Neural-initialized Newton: warm-started solves, baselines, and benchmarks.

The trained field predicts a near-solution for a new sample; that prediction
seeds a single-load-step Newton solve.  The benchmark compares the
neural-initialized solve against a cold solver that needs load continuation,
on both the training resolution and finer meshes.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace

import numpy as np

from ninfem import ifol
from ninfem import neural_field as nf
from ninfem.newton import NewtonConfig, NewtonFailure, NewtonReport, solve

DEFAULT_COLD_INCREMENTS = (1, 2, 5, 10, 20)


@dataclass
class NinResult:
    U: np.ndarray
    report: NewtonReport
    initial_guess: np.ndarray
    used_fallback: bool
    wall_time: float


def nin_solve(
    params: nf.ModelParams,
    sample: ifol.SampleBatch,
    config: NewtonConfig | None = None,
    k_encode: int = 3,
    alpha: float = 1e-2,
    fallback_increments: int = 10,
) -> NinResult:
    """Predict, then correct: network inference seeds a one-increment Newton.

    If the warm-started solve fails despite bisection, the solve restarts
    cold with ``fallback_increments`` load steps so a solution is still
    produced; ``used_fallback`` records which path ran.
    """
    if config is None:
        config = NewtonConfig()
    config = replace(config, n_increments=1)
    t0 = time.perf_counter()
    guess = ifol.infer(params, sample, k_encode=k_encode, alpha=alpha)
    problem = sample.problem(0)
    try:
        state, report = solve(problem, config, initial_guess=guess)
        used_fallback = False
    except NewtonFailure:
        cold = replace(config, n_increments=fallback_increments)
        state, report = solve(problem, cold)
        used_fallback = True
    return NinResult(
        U=state.U,
        report=report,
        initial_guess=guess,
        used_fallback=used_fallback,
        wall_time=time.perf_counter() - t0,
    )


def cold_solve_baseline(
    problem,
    config: NewtonConfig | None = None,
    increments=DEFAULT_COLD_INCREMENTS,
) -> tuple[np.ndarray, NewtonReport, int]:
    """Reference solve from zero: the fewest load increments that converge.

    Tries the increment counts in order and returns the first success as
    (solution, report, n_increments).  Raises the last failure if none work.
    """
    if config is None:
        config = NewtonConfig()
    last_exc = None
    for n_inc in increments:
        try:
            state, report = solve(problem, replace(config, n_increments=n_inc))
            return state.U, report, n_inc
        except NewtonFailure as exc:
            last_exc = exc
    raise last_exc


def compare_metrics(
    U: np.ndarray, U_ref: np.ndarray, dofs_per_node: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-component mean absolute error and max absolute error.

    Both fields are interleaved nodal vectors; returns arrays of length
    ``dofs_per_node`` (e.g. [u_x, u_y] in 2D, plus T for thermomechanics).
    """
    diff = np.abs(np.asarray(U) - np.asarray(U_ref)).reshape(-1, dofs_per_node)
    return diff.mean(axis=0), diff.max(axis=0)


@dataclass
class BenchRow:
    sample_id: int
    resolution: int
    method: str  # "nin" | "cold"
    iters_total: int
    increments: int
    wall_s: float
    mae: np.ndarray  # per DOF component
    errmax: np.ndarray
    converged: bool


def _component_names(kind: str, dim: int) -> list[str]:
    names = ["ux", "uy", "uz"][:dim]
    if kind == "thermomech":
        names.append("T")
    return names


def bench_csv_header(kind: str, dim: int) -> list[str]:
    comps = _component_names(kind, dim)
    return (
        ["sample_id", "resolution", "method", "iters_total", "increments", "wall_s"]
        + [f"mae_{c}" for c in comps]
        + [f"errmax_{c}" for c in comps]
        + ["converged"]
    )


def write_bench_csv(path, rows: list[BenchRow], kind: str, dim: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(bench_csv_header(kind, dim))
        for r in rows:
            writer.writerow(
                [r.sample_id, r.resolution, r.method, r.iters_total, r.increments]
                + [f"{r.wall_s:.6f}"]
                + [repr(float(v)) for v in r.mae]
                + [repr(float(v)) for v in r.errmax]
                + [int(r.converged)]
            )


def run_benchmark(
    params: nf.ModelParams,
    batch: ifol.SampleBatch,
    newton_config: NewtonConfig | None = None,
    k_encode: int = 3,
    alpha: float = 1e-2,
    cold_increments=DEFAULT_COLD_INCREMENTS,
    progress=None,
) -> list[BenchRow]:
    """Per-sample comparison of neural-initialized vs cold Newton.

    The cold solve doubles as the error reference.  Each sample yields two
    rows (method "cold" then "nin"); NiN rows that needed the fallback are
    marked not converged since the single-step warm start failed.
    """
    if newton_config is None:
        newton_config = NewtonConfig()
    resolution = batch.mesh.nodes_per_axis[0]
    rows: list[BenchRow] = []
    d = batch.dofs_per_node
    for i in range(batch.n_samples):
        sample = batch.sample(i)
        problem = sample.problem(0)

        t0 = time.perf_counter()
        U_ref, cold_report, n_inc = cold_solve_baseline(
            problem, newton_config, cold_increments
        )
        cold_wall = time.perf_counter() - t0
        rows.append(
            BenchRow(
                sample_id=i,
                resolution=resolution,
                method="cold",
                iters_total=cold_report.total_iterations,
                increments=n_inc,
                wall_s=cold_wall,
                mae=np.zeros(d),
                errmax=np.zeros(d),
                converged=cold_report.converged,
            )
        )

        result = nin_solve(
            params, sample, newton_config, k_encode=k_encode, alpha=alpha
        )
        mae, errmax = compare_metrics(result.U, U_ref, d)
        rows.append(
            BenchRow(
                sample_id=i,
                resolution=resolution,
                method="nin",
                iters_total=result.report.total_iterations,
                increments=len(result.report.increments),
                wall_s=result.wall_time,
                mae=mae,
                errmax=errmax,
                converged=result.report.converged and not result.used_fallback,
            )
        )
        if progress is not None:
            progress(rows[-2], rows[-1])
    return rows


def summarize_benchmark(rows: list[BenchRow]) -> dict:
    """Convergence rate and median iteration counts per method."""
    out = {}
    for method in ("cold", "nin"):
        sel = [r for r in rows if r.method == method]
        if not sel:
            continue
        iters = [r.iters_total for r in sel if r.converged]
        out[method] = {
            "n": len(sel),
            "converged": sum(r.converged for r in sel),
            "convergence_rate": sum(r.converged for r in sel) / len(sel),
            "median_iters": float(np.median(iters)) if iters else float("nan"),
            "median_wall_s": float(np.median([r.wall_s for r in sel])),
        }
    return out
