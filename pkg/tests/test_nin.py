"""Neural-initialized Newton: warm starts, baselines, benchmark output."""

import csv

import numpy as np
import pytest

from ninfem import ifol, nin
from ninfem import neural_field as nf
from ninfem.assembly import build_dirichlet
from ninfem.material import PhaseField
from ninfem.mesh import build_box_mesh
from ninfem.newton import NewtonConfig, solve

CFG = nf.SirenConfig(input_dim=2, output_dim=2, hidden=(8, 8), latent_dim=4)


def _batch(n_samples=2, n=5, seed=0, stretch=0.2):
    mesh = build_box_mesh(2, (1.0, 1.0), (n, n))
    mask, values = build_dirichlet(
        mesh,
        2,
        [(0, 0, 0, 0.0), (0, 0, 1, 0.0), (0, 1, 0, stretch), (0, 1, 1, 0.0)],
    )
    rng = np.random.default_rng(seed)
    phases = [
        PhaseField(values=rng.uniform(0.1, 1.0, mesh.n_nodes))
        for _ in range(n_samples)
    ]
    return ifol.hyperelastic_batch(mesh, phases, mask, values)


def test_compare_metrics_against_loop():
    rng = np.random.default_rng(0)
    U = rng.standard_normal(30)
    U_ref = rng.standard_normal(30)
    mae, errmax = nin.compare_metrics(U, U_ref, 2)
    for c in range(2):
        diffs = [abs(U[i] - U_ref[i]) for i in range(c, 30, 2)]
        assert np.isclose(mae[c], np.mean(diffs), atol=1e-14)
        assert np.isclose(errmax[c], np.max(diffs), atol=1e-14)
    assert mae.shape == errmax.shape == (2,)
    assert np.all(mae <= errmax)


def test_nin_solve_runs_single_increment():
    batch = _batch()
    params = nf.init_params(CFG, seed=0)
    res = nin.nin_solve(params, batch.sample(0), NewtonConfig())
    assert res.report.converged
    if not res.used_fallback:
        assert len(res.report.increments) == 1
    # result agrees with a cold reference solve
    U_ref, _, _ = nin.cold_solve_baseline(batch.sample(0).problem(0))
    rel = np.max(np.abs(res.U - U_ref)) / (1.0 + np.max(np.abs(U_ref)))
    assert rel < 1e-6


def test_nin_solve_near_perfect_guess_is_cheap():
    """A warm start near the solution needs at most a couple of iterations."""
    batch = _batch()
    sample = batch.sample(0)
    U_ref, _, _ = nin.cold_solve_baseline(sample.problem(0))
    state, report = solve(
        sample.problem(0), NewtonConfig(n_increments=1), initial_guess=U_ref
    )
    assert report.total_iterations == 0
    rng = np.random.default_rng(1)
    U0 = U_ref + 1e-3 * rng.standard_normal(U_ref.size) * (~sample.dirichlet_mask)
    _, report = solve(sample.problem(0), NewtonConfig(n_increments=1), initial_guess=U0)
    assert report.total_iterations <= 3


def test_fallback_on_hopeless_guess():
    """An absurd warm start falls back to the cold incremental solve."""
    batch = _batch(stretch=0.4)
    sample = batch.sample(0)
    params = nf.init_params(CFG, seed=0)
    # blow up the final layer so the prediction is far outside the basin
    params.W[-1] = params.W[-1] + 100.0
    res = nin.nin_solve(
        params, sample, NewtonConfig(max_iters=5, max_bisections=0)
    )
    assert res.used_fallback
    assert res.report.converged
    U_ref, _, _ = nin.cold_solve_baseline(sample.problem(0))
    assert np.max(np.abs(res.U - U_ref)) / (1.0 + np.max(np.abs(U_ref))) < 1e-6


def test_cold_baseline_picks_smallest_increment_count():
    batch = _batch()
    U, report, n_inc = nin.cold_solve_baseline(
        batch.sample(0).problem(0), NewtonConfig()
    )
    assert n_inc == nin.DEFAULT_COLD_INCREMENTS[0]
    assert report.converged


def test_benchmark_rows_and_csv(tmp_path):
    batch = _batch(n_samples=2)
    params = nf.init_params(CFG, seed=1)
    rows = nin.run_benchmark(params, batch, NewtonConfig())
    assert len(rows) == 4  # cold + nin per sample
    methods = [r.method for r in rows]
    assert methods == ["cold", "nin", "cold", "nin"]
    for r in rows:
        assert r.resolution == 5
        assert r.mae.shape == (2,)
    # cold rows are their own reference
    cold = [r for r in rows if r.method == "cold"]
    assert all(np.all(r.mae == 0.0) and np.all(r.errmax == 0.0) for r in cold)

    path = tmp_path / "bench.csv"
    nin.write_bench_csv(path, rows, "hyperelastic", 2)
    with open(path) as fh:
        table = list(csv.reader(fh))
    assert table[0] == [
        "sample_id", "resolution", "method", "iters_total", "increments",
        "wall_s", "mae_ux", "mae_uy", "errmax_ux", "errmax_uy", "converged",
    ]
    assert len(table) == 5


def test_summarize_benchmark():
    batch = _batch(n_samples=3, seed=2)
    params = nf.init_params(CFG, seed=2)
    rows = nin.run_benchmark(params, batch, NewtonConfig())
    summary = nin.summarize_benchmark(rows)
    for method in ("cold", "nin"):
        s = summary[method]
        assert s["n"] == 3
        assert 0.0 <= s["convergence_rate"] <= 1.0
        assert s["median_iters"] >= 0
