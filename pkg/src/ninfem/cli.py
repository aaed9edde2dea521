"""Command-line driver for the sample-generation / training / solve pipeline.

Subcommands: generate, train, infer, solve, nin, bench.  Configuration is a
JSON file; named presets embed the default experiment setups.  The ``NIN_LOG``
environment variable sets verbosity (debug | info | warning | quiet).
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from ninfem import ifol, nin, sampler
from ninfem import neural_field as nf
from ninfem.assembly import ThermoMechProblem, build_dirichlet
from ninfem.material import InvertedElementError, ThermoMechParams
from ninfem.mesh import ConfigurationError, StructuredMesh, build_box_mesh
from ninfem.newton import (
    LinearSolverError,
    NewtonConfig,
    NewtonFailure,
    solve,
    solve_thermomech,
)

log = logging.getLogger("ninfem")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_TRAINING = 4


# ---------------------------------------------------------------------------
# Configuration


def _preset_2d_hyper() -> dict:
    return {
        "problem": "hyperelastic",
        "dim": 2,
        "mesh": {"extents": [1.0, 1.0], "nodes_per_axis": [21, 21]},
        "material": {"phase_contrast": 10.0},
        "bc": [
            {"axis": 0, "side": 0, "component": 0, "value": 0.0},
            {"axis": 0, "side": 0, "component": 1, "value": 0.0},
            {"axis": 0, "side": 1, "component": 0, "value": 0.2},
            {"axis": 0, "side": 1, "component": 1, "value": 0.0},
        ],
        "sampler": {
            "frequencies": [0, 1, 2, 3],
            "beta": 20.0,
            "phi_min": 0.1,
            "phi_max": 1.0,
            "n_samples": 200,
        },
        # omega0 is kept at roughly the training mesh's Nyquist band: higher
        # bandwidths let the field carry sub-grid oscillations the coarse
        # residual cannot see, which then invert elements when the same
        # checkpoint is evaluated on finer meshes.
        "network": {"latent_dim": 64, "hidden": [32, 32, 32], "omega0": 10.0},
        "train": {
            "k_encode": 3,
            "alpha": 1e-2,
            "lr": 1e-5,
            "batch_size": 50,
            "epochs": 2000,
        },
        "newton": {
            "tol": 1e-6,
            "max_iters": 25,
            "n_increments": 1,
            "linear_solver": "direct",
            "preconditioner": "jacobi",
        },
        "bench": {
            "n_samples": 20,
            "seed": 1234,
            "resolutions": [21, 41],
            "cold_increments": [1, 2, 5, 10, 20],
        },
        "paths": {"samples": "samples.bin", "checkpoint": "model.ckpt"},
        "seed": 0,
    }


def _preset_3d_thermomech() -> dict:
    cfg = _preset_2d_hyper()
    cfg.update(
        problem="thermomech",
        dim=3,
        mesh={"extents": [1.0, 1.0, 1.0], "nodes_per_axis": [9, 9, 9]},
        material={"phase_contrast": 1.0 / 0.3, "nu": 0.3, "alpha": 1.0,
                  "b": 2.0, "c": 2.0, "T0": 0.0},
        # Temperature gradient along x; each normal displacement pinned on
        # its own pair of faces, others left free.
        bc=[
            {"axis": 0, "side": 0, "component": 3, "value": 0.0},
            {"axis": 0, "side": 1, "component": 3, "value": 1.0},
            {"axis": 0, "side": 0, "component": 0, "value": 0.0},
            {"axis": 0, "side": 1, "component": 0, "value": 0.0},
            {"axis": 1, "side": 0, "component": 1, "value": 0.0},
            {"axis": 1, "side": 1, "component": 1, "value": 0.0},
            {"axis": 2, "side": 0, "component": 2, "value": 0.0},
            {"axis": 2, "side": 1, "component": 2, "value": 0.0},
        ],
        sampler={
            "frequencies": [1, 2, 3],
            "beta": 10.0,
            "phi_min": 0.3,
            "phi_max": 1.0,
            "n_samples": 100,
        },
    )
    cfg["bench"]["resolutions"] = [9, 17]
    return cfg


PRESETS = {
    "desk-2d-hyper": _preset_2d_hyper,
    "desk-3d-thermomech": _preset_3d_thermomech,
}


def load_config(path_or_preset: str | None) -> dict:
    """Resolve a config: preset name, JSON file, or the default preset."""
    if path_or_preset is None:
        return _preset_2d_hyper()
    if path_or_preset in PRESETS:
        return PRESETS[path_or_preset]()
    path = Path(path_or_preset)
    if not path.exists():
        raise ConfigurationError(
            f"config '{path_or_preset}' is neither a preset "
            f"({', '.join(PRESETS)}) nor an existing file"
        )
    try:
        user = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON in {path}: {exc}") from exc
    base = PRESETS.get(user.get("preset", "desk-2d-hyper"), _preset_2d_hyper)()
    return _deep_merge(base, {k: v for k, v in user.items() if k != "preset"})


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_config(cfg: dict) -> dict:
    dim = cfg["dim"]
    if cfg["problem"] not in ("hyperelastic", "thermomech"):
        raise ConfigurationError(f"unknown problem kind '{cfg['problem']}'")
    if dim not in (2, 3):
        raise ConfigurationError("dim must be 2 or 3")
    if len(cfg["mesh"]["extents"]) != dim or len(cfg["mesh"]["nodes_per_axis"]) != dim:
        raise ConfigurationError("mesh arrays must match dim")
    d = dim + 1 if cfg["problem"] == "thermomech" else dim
    for entry in cfg["bc"]:
        if not 0 <= entry["component"] < d:
            raise ConfigurationError(
                f"BC component {entry['component']} out of range for {d} DOFs/node"
            )
    return cfg


# ---------------------------------------------------------------------------
# Builders


def build_mesh(cfg: dict, nodes_per_axis=None) -> StructuredMesh:
    m = cfg["mesh"]
    n = nodes_per_axis if nodes_per_axis is not None else m["nodes_per_axis"]
    if np.isscalar(n):
        n = [int(n)] * cfg["dim"]
    return build_box_mesh(cfg["dim"], tuple(m["extents"]), tuple(n))


def build_sampler_spec(cfg: dict) -> sampler.FourierSampleSpec:
    s = cfg["sampler"]
    return sampler.FourierSampleSpec(
        dim=cfg["dim"],
        frequencies=tuple(s["frequencies"]),
        beta=float(s["beta"]),
        phi_min=float(s["phi_min"]),
        phi_max=float(s["phi_max"]),
    )


def build_newton_config(cfg: dict) -> NewtonConfig:
    n = cfg["newton"]
    return NewtonConfig(
        tol=float(n.get("tol", 1e-6)),
        max_iters=int(n.get("max_iters", 25)),
        n_increments=int(n.get("n_increments", 1)),
        linear_solver=n.get("linear_solver", "direct"),
        bicgstab_rel_tol=float(n.get("bicgstab_rel_tol", 1e-10)),
        bicgstab_max_it=int(n.get("bicgstab_max_it", 2000)),
        preconditioner=n.get("preconditioner", "jacobi"),
        max_bisections=int(n.get("max_bisections", 4)),
    )


def build_train_config(cfg: dict, seed: int) -> ifol.TrainConfig:
    t = cfg["train"]
    return ifol.TrainConfig(
        k_encode=int(t.get("k_encode", 3)),
        alpha=float(t.get("alpha", 1e-2)),
        lr=float(t.get("lr", 1e-5)),
        batch_size=int(t.get("batch_size", 50)),
        epochs=int(t.get("epochs", 2000)),
        seed=seed,
    )


def build_bc(cfg: dict, mesh: StructuredMesh, dofs_per_node: int):
    entries = [
        (e["axis"], e["side"], e["component"], float(e["value"])) for e in cfg["bc"]
    ]
    return build_dirichlet(mesh, dofs_per_node, entries)


def _apply_phase_contrast(phases, cfg):
    pc = float(cfg["material"].get("phase_contrast", 0.0))
    s = cfg["sampler"]
    native = float(s["phi_max"]) / float(s["phi_min"])
    if pc > 1.0 and abs(pc - native) > 1e-12:
        return [sampler.remap_phase_contrast(p, pc) for p in phases]
    return phases


def build_batch(cfg: dict, mesh: StructuredMesh, phases) -> ifol.SampleBatch:
    if cfg["problem"] == "hyperelastic":
        mask, values = build_bc(cfg, mesh, mesh.dim)
        return ifol.hyperelastic_batch(mesh, phases, mask, values)
    mask, values = build_bc(cfg, mesh, mesh.dim + 1)
    from ninfem.mesh import element_geometry, gauss_rule

    geom = element_geometry(mesh, 0, gauss_rule(mesh.dim))
    phi = np.stack([p.at_gauss_points(mesh.elements, geom.N) for p in phases])
    m = cfg["material"]
    params = ThermoMechParams(
        nu=float(m.get("nu", 0.3)),
        alpha=float(m.get("alpha", 1.0)),
        b=float(m.get("b", 2.0)),
        c=float(m.get("c", 2.0)),
        T0=float(m.get("T0", 0.0)),
    )
    return ifol.SampleBatch(
        mesh=mesh,
        kind="thermomech",
        dirichlet_mask=mask,
        dirichlet_values=values,
        phi_gp=phi,
        params=params,
        geom=geom,
    )


# ---------------------------------------------------------------------------
# Output writers


_VTK_CELL_TYPE = {2: 9, 3: 12}  # quad, hexahedron


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_vtk(path, mesh: StructuredMesh, point_data: dict) -> None:
    """Legacy ASCII VTK unstructured grid with nodal vectors/scalars."""
    lines = [
        "# vtk DataFile Version 3.0",
        "ninfem field export",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    coords = np.zeros((mesh.n_nodes, 3))
    coords[:, : mesh.dim] = mesh.node_coords
    lines += [" ".join(_fmt(v) for v in row) for row in coords]
    n_el, n_a = mesh.elements.shape
    lines.append(f"CELLS {n_el} {n_el * (n_a + 1)}")
    lines += [
        f"{n_a} " + " ".join(str(int(v)) for v in conn) for conn in mesh.elements
    ]
    lines.append(f"CELL_TYPES {n_el}")
    lines += [str(_VTK_CELL_TYPE[mesh.dim])] * n_el
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    for name, arr in point_data.items():
        arr = np.asarray(arr)
        if arr.ndim == 2:
            vec = np.zeros((mesh.n_nodes, 3))
            vec[:, : arr.shape[1]] = arr
            lines.append(f"VECTORS {name} double")
            lines += [" ".join(_fmt(v) for v in row) for row in vec]
        else:
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [_fmt(v) for v in arr]
    Path(path).write_text("\n".join(lines) + "\n")


def write_newton_csv(path, report) -> None:
    import csv as _csv

    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["increment", "iter", "residual_norm"])
        for inc, it, rn in report.csv_rows():
            w.writerow([inc, it, repr(float(rn))])


def _split_fields(U: np.ndarray, mesh: StructuredMesh, kind: str) -> dict:
    d = mesh.dim + 1 if kind == "thermomech" else mesh.dim
    Un = U.reshape(mesh.n_nodes, d)
    fields = {"displacement": Un[:, : mesh.dim]}
    if kind == "thermomech":
        fields["temperature"] = Un[:, mesh.dim]
    return fields


# ---------------------------------------------------------------------------
# Commands


def _sample_phases(cfg: dict, mesh: StructuredMesh, n: int, seed: int):
    spec = build_sampler_spec(cfg)
    rng = np.random.default_rng(seed)
    coefs = [sampler.draw_coefficients(spec, rng) for _ in range(n)]
    phases = [sampler.evaluate(spec, c, mesh) for c in coefs]
    return _apply_phase_contrast(phases, cfg), coefs, spec


def cmd_generate(cfg: dict, args) -> int:
    mesh = build_mesh(cfg)
    n = int(cfg["sampler"]["n_samples"])
    phases, _, spec = _sample_phases(cfg, mesh, n, cfg["seed"])
    out = Path(args.out or cfg["paths"]["samples"])
    if not out.parent.exists():
        raise ConfigurationError(f"output directory {out.parent} does not exist")
    sampler.save_samples(out, phases, spec, cfg["seed"])
    log.info("wrote %d samples to %s", n, out)
    return EXIT_OK


def cmd_train(cfg: dict, args) -> int:
    mesh = build_mesh(cfg)
    samples_path = Path(cfg["paths"]["samples"])
    if samples_path.exists():
        phases = _apply_phase_contrast(sampler.load_samples(samples_path), cfg)
        log.info("loaded %d samples from %s", len(phases), samples_path)
    else:
        n = int(cfg["sampler"]["n_samples"])
        phases, _, _ = _sample_phases(cfg, mesh, n, cfg["seed"])
        log.info("generated %d samples in-memory (no sample file found)", n)
    batch = build_batch(cfg, mesh, phases)

    net = cfg["network"]
    siren = nf.SirenConfig(
        input_dim=mesh.dim,
        output_dim=batch.dofs_per_node,
        hidden=tuple(net["hidden"]),
        latent_dim=int(net["latent_dim"]),
        omega0=float(net.get("omega0", 30.0)),
    )
    resume = cfg["paths"].get("resume")
    if resume:
        siren, params = nf.load_checkpoint(resume)
        log.info("resumed from checkpoint %s", resume)
    else:
        params = nf.init_params(siren, seed=cfg["seed"])

    train_cfg = build_train_config(cfg, cfg["seed"])
    out = Path(args.out or cfg["paths"]["checkpoint"])
    log_path = out.with_suffix(out.suffix + ".train.csv")

    def progress(row):
        if row.epoch % max(1, train_cfg.epochs // 20) == 0 or row.epoch == 1:
            log.info(
                "epoch %d/%d loss %.6e grad %.3e %.1fs",
                row.epoch, train_cfg.epochs, row.mean_loss, row.grad_norm, row.seconds,
            )

    params, train_log = ifol.train(train_cfg, params, batch, progress=progress)
    if args.deterministic:
        for row in train_log:
            row.seconds = 0.0
    ifol.write_training_log(log_path, train_log)
    nf.save_checkpoint(out, siren, params)
    log.info("wrote checkpoint %s and log %s", out, log_path)
    return EXIT_OK


def _load_model_and_sample(cfg: dict, args, nodes_per_axis=None):
    mesh = build_mesh(cfg, nodes_per_axis)
    _, params = nf.load_checkpoint(cfg["paths"]["checkpoint"])
    idx = int(cfg.get("sample_index", 0))
    phases, _, _ = _sample_phases(
        cfg, mesh, idx + 1, cfg.get("eval_seed", cfg["seed"] + 1)
    )
    batch = build_batch(cfg, mesh, [phases[idx]])
    return mesh, params, batch.sample(0)


def cmd_infer(cfg: dict, args) -> int:
    mesh, params, sample = _load_model_and_sample(cfg, args)
    t = cfg["train"]
    U = ifol.infer(
        params, sample, k_encode=int(t["k_encode"]), alpha=float(t["alpha"])
    )
    out = Path(args.out or "infer.vtk")
    write_vtk(out, mesh, _split_fields(U, mesh, cfg["problem"]))
    np.save(out.with_suffix(".npy"), U)
    log.info("wrote %s", out)
    return EXIT_OK


def cmd_solve(cfg: dict, args) -> int:
    mesh = build_mesh(cfg)
    idx = int(cfg.get("sample_index", 0))
    phases, _, _ = _sample_phases(
        cfg, mesh, idx + 1, cfg.get("eval_seed", cfg["seed"] + 1)
    )
    batch = build_batch(cfg, mesh, [phases[idx]])
    problem = batch.problem(0)
    newton_cfg = build_newton_config(cfg)
    if cfg["problem"] == "thermomech":
        state, report = solve_thermomech(problem, newton_cfg)
    else:
        state, report = solve(problem, newton_cfg)
    out = Path(args.out or "solve.vtk")
    write_vtk(out, mesh, _split_fields(state.U, mesh, cfg["problem"]))
    np.save(out.with_suffix(".npy"), state.U)
    if args.deterministic:
        report.wall_time = 0.0
    write_newton_csv(out.with_suffix(".report.csv"), report)
    log.info(
        "solved in %d iterations over %d increments",
        report.total_iterations, len(report.increments),
    )
    return EXIT_OK


def cmd_nin(cfg: dict, args) -> int:
    mesh, params, sample = _load_model_and_sample(cfg, args)
    t = cfg["train"]
    result = nin.nin_solve(
        params,
        sample,
        build_newton_config(cfg),
        k_encode=int(t["k_encode"]),
        alpha=float(t["alpha"]),
    )
    out = Path(args.out or "nin.vtk")
    write_vtk(out, mesh, _split_fields(result.U, mesh, cfg["problem"]))
    np.save(out.with_suffix(".npy"), result.U)
    if args.deterministic:
        result.report.wall_time = 0.0
    write_newton_csv(out.with_suffix(".report.csv"), result.report)
    log.info(
        "neural-initialized solve: %d iterations%s",
        result.report.total_iterations,
        " (fallback used)" if result.used_fallback else "",
    )
    return EXIT_OK


def cmd_bench(cfg: dict, args) -> int:
    bench = cfg["bench"]
    _, params = nf.load_checkpoint(cfg["paths"]["checkpoint"])
    spec = build_sampler_spec(cfg)
    rng = np.random.default_rng(int(bench.get("seed", 1234)))
    n = int(bench["n_samples"])
    coefs = [sampler.draw_coefficients(spec, rng) for _ in range(n)]
    newton_cfg = build_newton_config(cfg)
    t = cfg["train"]
    all_rows = []
    for res in bench["resolutions"]:
        mesh = build_mesh(cfg, res)
        phases = _apply_phase_contrast(
            [sampler.evaluate(spec, c, mesh) for c in coefs], cfg
        )
        batch = build_batch(cfg, mesh, phases)
        rows = nin.run_benchmark(
            params,
            batch,
            newton_cfg,
            k_encode=int(t["k_encode"]),
            alpha=float(t["alpha"]),
            cold_increments=tuple(bench.get("cold_increments", (1, 2, 5, 10, 20))),
        )
        if args.deterministic:
            for r in rows:
                r.wall_s = 0.0
        all_rows.extend(rows)
        summary = nin.summarize_benchmark(rows)
        for method, stats in summary.items():
            log.info(
                "res %s %s: %d/%d converged, median iters %.1f",
                res, method, stats["converged"], stats["n"], stats["median_iters"],
            )
    out = Path(args.out or "bench.csv")
    dim = cfg["dim"]
    nin.write_bench_csv(out, all_rows, cfg["problem"], dim)
    summary_path = out.with_suffix(".summary.json")
    summary_path.write_text(
        json.dumps(nin.summarize_benchmark(all_rows), indent=2, sort_keys=True) + "\n"
    )
    log.info("wrote %s and %s", out, summary_path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ninfem",
        description="Nonlinear FEM with neural-field warm starts",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", help="JSON config file or preset name")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help="cap BLAS/worker thread count")
        p.add_argument(
            "--deterministic",
            action="store_true",
            help="zero wall-clock fields so outputs are bit-reproducible",
        )
        p.add_argument("--out", help="output file path")
    return parser


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "infer": cmd_infer,
    "solve": cmd_solve,
    "nin": cmd_nin,
    "bench": cmd_bench,
}


def _setup_logging() -> None:
    level = os.environ.get("NIN_LOG", "info").lower()
    levels = {
        "debug": logging.DEBUG,
        "info": logging.INFO,
        "warning": logging.WARNING,
        "quiet": logging.CRITICAL,
    }
    logging.basicConfig(
        level=levels.get(level, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _set_threads(n: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.threads:
        _set_threads(args.threads)
    try:
        cfg = validate_config(load_config(args.config))
        if args.seed is not None:
            cfg["seed"] = args.seed
        return COMMANDS[args.command](cfg, args)
    except (ConfigurationError, KeyError, FileNotFoundError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (NewtonFailure, LinearSolverError, InvertedElementError) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except FloatingPointError as exc:
        log.error("training diverged: %s", exc)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
