"""Batch command-line front end.

Commands: ``run`` (march one evolution and emit CSVs plus verification),
``converge`` (grid-refinement study), ``verify`` (re-audit a finished run
directory), ``point`` (single-point strain-driven trace).  Exit codes:
0 success, 2 configuration error, 3 solver non-convergence, 4 verification
failure.  Outputs are byte-identical across repeated runs of the same
manifest: fixed float formatting, fixed seeds, no timestamps.
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_VERIFICATION = 4

_DEFAULT_CHECKS = ("flow_rule", "normality", "variational_inequality")


def _set_thread_env() -> None:
    """Pin BLAS threads from QUASIPLAST_THREADS before numpy is imported."""
    n = os.environ.get("QUASIPLAST_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)


def _load_toml(path):
    if sys.version_info >= (3, 11):
        import tomllib as toml
    else:
        import tomli as toml
    with open(path, "rb") as fh:
        return toml.load(fh)


def _config_error(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_CONFIG


class Manifest:
    """Resolved run manifest: scenario path, grid, solver overrides, outputs."""

    def __init__(self, path, args):
        cfg = _load_toml(path)
        base = os.path.dirname(os.path.abspath(path))
        if "scenario" not in cfg:
            raise ValueError("manifest must name a scenario file")
        self.scenario_path = os.path.join(base, cfg["scenario"])
        if not os.path.exists(self.scenario_path):
            raise ValueError(f"scenario file not found: {self.scenario_path}")
        self.steps = int(getattr(args, "steps", None) or cfg.get("steps", 0) or 0)
        self.times = cfg.get("times")
        if self.steps < 1 and not self.times:
            raise ValueError("manifest needs steps >= 1 or an explicit times list")
        self.out_dir = getattr(args, "out", None) or cfg.get("out", "out")
        self.checks = tuple(cfg.get("checks", _DEFAULT_CHECKS))
        self.seed = int(cfg.get("seed", 715))
        self.fields = cfg.get("fields", "final")
        if self.fields not in ("final", "all"):
            raise ValueError("manifest key 'fields' must be 'final' or 'all'")
        self.grids = [int(k) for k in cfg.get("converge", {}).get("grids", [])]
        solver_cfg = dict(cfg.get("solver", {}))
        tol_res = getattr(args, "tol_res", None)
        if tol_res is not None:
            solver_cfg["tol_res"] = tol_res
        self.solver_kwargs = {
            k: (int(v) if k == "max_outer" else float(v))
            for k, v in solver_cfg.items()
            if k in ("tol_energy", "tol_res", "max_outer", "relaxation")
        }
        self.force = bool(getattr(args, "force", False))
        self.emit_plotdata = bool(getattr(args, "emit_plotdata", False))


def _build(manifest):
    from .evolution import TimeGrid
    from .scenario import load_scenario
    from .solver import SolverConfig

    scenario = load_scenario(manifest.scenario_path)
    if manifest.times:
        grid = TimeGrid(manifest.times)
    else:
        grid = TimeGrid.uniform(scenario.T, manifest.steps)
    cfg = SolverConfig(**manifest.solver_kwargs)
    return scenario, grid, cfg


def _run_checks(record, checks, seed):
    from . import verification as ver

    results = []
    for name in checks:
        if name == "flow_rule":
            results.append(ver.check_flow_rule(record))
        elif name == "normality":
            results.append(ver.check_normality(record))
        elif name == "variational_inequality":
            results.append(ver.check_variational_inequality(record, seed=seed))
        else:
            raise ValueError(f"unknown check {name!r}")
    return results


def _write_run_outputs(manifest, record, results):
    import csv

    from .evolution import write_energies_csv, write_fields_csv

    out = manifest.out_dir
    os.makedirs(out, exist_ok=True)
    write_energies_csv(os.path.join(out, "energies.csv"), record)
    steps = range(len(record.times)) if manifest.fields == "all" else [len(record.times) - 1]
    for i in steps:
        write_fields_csv(os.path.join(out, f"fields_{i:04d}.csv"), record, i)
    from .verification import write_verify_csv

    write_verify_csv(os.path.join(out, "verify.csv"), results)
    if manifest.emit_plotdata:
        from .evolution import discrete_energy_audit, energy_balance_residual

        series = {
            "stored": record.stored,
            "dissipated": record.dissipated,
            "load_potential": record.load_potential,
            "balance_residual": energy_balance_residual(record),
            "discrete_gap": discrete_energy_audit(record),
        }
        with open(os.path.join(out, "plotdata.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "series", "value"])
            for name, vals in series.items():
                for t, v in zip(record.times, vals):
                    w.writerow([repr(float(t)), name, repr(float(v))])


def _write_run_manifest(manifest, record):
    """Record enough to re-execute the run deterministically (verify cmd)."""
    out = manifest.out_dir
    lines = [
        f'scenario = "{os.path.abspath(manifest.scenario_path)}"',
        "times = [" + ", ".join(repr(float(t)) for t in record.times) + "]",
        "checks = [" + ", ".join(f'"{c}"' for c in manifest.checks) + "]",
        f"seed = {manifest.seed}",
        f'fields = "{manifest.fields}"',
        "[solver]",
    ]
    for k, v in manifest.solver_kwargs.items():
        lines.append(f"{k} = {v!r}")
    with open(os.path.join(out, "run.toml"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_run(args) -> int:
    from .evolution import run_evolution
    from .scenario import ScenarioError
    from .solver import NonConvergenceError, SafeLoadError

    try:
        manifest = Manifest(args.manifest, args)
        scenario, grid, cfg = _build(manifest)
    except (ValueError, OSError) as exc:
        return _config_error(str(exc))
    try:
        record = run_evolution(scenario, grid, cfg=cfg, force=manifest.force)
    except SafeLoadError as exc:
        return _config_error(f"safe-load condition violated: {exc}")
    except NonConvergenceError as exc:
        print(f"error: step {exc.step_index}: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    results = _run_checks(record, manifest.checks, manifest.seed)
    _write_run_outputs(manifest, record, results)
    _write_run_manifest(manifest, record)
    failed = [r.name for r in results if not r.passed]
    for r in results:
        print(f"{r.name}: {'pass' if r.passed else 'FAIL'} (worst {r.worst_residual:.3e})")
    if failed:
        print(f"verification failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFICATION
    print(f"run complete: {len(record.times) - 1} steps -> {manifest.out_dir}")
    return EXIT_OK


def cmd_converge(args) -> int:
    from .evolution import TimeGrid, convergence_study, write_study_csv
    from .scenario import ScenarioError
    from .solver import NonConvergenceError, SafeLoadError

    try:
        manifest = Manifest(args.manifest, args)
        if len(manifest.grids) < 3:
            raise ValueError("a convergence study needs at least 3 grids")
        scenario, _, cfg = _build(manifest)
        grids = [TimeGrid.uniform(scenario.T, k) for k in manifest.grids]
    except (ValueError, OSError) as exc:
        return _config_error(str(exc))
    try:
        study = convergence_study(scenario, grids, cfg=cfg)
    except SafeLoadError as exc:
        return _config_error(f"safe-load condition violated: {exc}")
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    os.makedirs(manifest.out_dir, exist_ok=True)
    write_study_csv(os.path.join(manifest.out_dir, "study.csv"), study)
    decreasing = bool(
        all(
            study.sigma_cauchy[j + 1] < study.sigma_cauchy[j]
            for j in range(len(study.sigma_cauchy) - 1)
        )
    )
    for j in range(len(study.sigma_cauchy)):
        print(
            f"k={study.grid_sizes[j]} -> k={study.grid_sizes[j+1]}: "
            f"|sigma_k - sigma_2k| = {study.sigma_cauchy[j]:.6e}"
        )
    if not decreasing:
        print("error: Cauchy norms are not strictly decreasing", file=sys.stderr)
        return EXIT_VERIFICATION
    print(f"study complete -> {manifest.out_dir}/study.csv")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .evolution import TimeGrid, run_evolution
    from .scenario import load_scenario
    from .solver import NonConvergenceError, SafeLoadError, SolverConfig
    from .verification import write_verify_csv

    run_file = os.path.join(args.run_dir, "run.toml")
    if not os.path.exists(run_file):
        return _config_error(f"no run.toml in {args.run_dir}")
    try:
        cfg_data = _load_toml(run_file)
        scenario = load_scenario(cfg_data["scenario"])
        grid = TimeGrid(cfg_data["times"])
        cfg = SolverConfig(**cfg_data.get("solver", {}))
    except (ValueError, OSError, KeyError) as exc:
        return _config_error(str(exc))
    try:
        record = run_evolution(scenario, grid, cfg=cfg)
    except SafeLoadError as exc:
        return _config_error(str(exc))
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    results = _run_checks(record, tuple(cfg_data.get("checks", _DEFAULT_CHECKS)),
                          int(cfg_data.get("seed", 715)))
    write_verify_csv(os.path.join(args.run_dir, "verify.csv"), results)
    failed = [r.name for r in results if not r.passed]
    for r in results:
        print(f"{r.name}: {'pass' if r.passed else 'FAIL'} (worst {r.worst_residual:.3e})")
    return EXIT_VERIFICATION if failed else EXIT_OK


def cmd_point(args) -> int:
    from .material_point import read_history_csv, run_point, write_point_csv
    from .scenario import ScenarioError, _material_from_config

    try:
        cfg = _load_toml(args.material)
        mat_cfg = cfg.get("material", cfg)
        dim = int(mat_cfg.get("dim", 2))
        if dim == 2:
            material = _material_from_config(mat_cfg)
        else:
            from .constitutive import ElasticModuli, Material, VonMises

            material = Material(
                moduli=ElasticModuli(dim=3, mu=float(mat_cfg["mu"]), kappa=float(mat_cfg["kappa"])),
                yield_surface=VonMises(dim=3, radius=float(mat_cfg.get("radius", 1.0))),
            )
        history = read_history_csv(args.history, dim)
        record = run_point(material, history)
    except (ValueError, OSError, KeyError) as exc:
        return _config_error(str(exc))
    out = args.out or "point_trace.csv"
    write_point_csv(out, record)
    from .material_point import energy_residual

    res = energy_residual(record)
    print(f"point trace: {len(record.times)} samples -> {out} "
          f"(max |energy residual| {abs(res).max():.3e})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quasiplast",
        description="Quasistatic perfect-plasticity solver and verification harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="march one evolution and write CSV outputs")
    p_run.add_argument("manifest")
    p_run.add_argument("--steps", type=int, default=None, help="uniform grid steps")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--tol-res", dest="tol_res", type=float, default=None)
    p_run.add_argument("--force", action="store_true",
                       help="run despite safe-load/stability failures")
    p_run.add_argument("--emit-plotdata", dest="emit_plotdata", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_conv = sub.add_parser("converge", help="grid-refinement Cauchy study")
    p_conv.add_argument("manifest")
    p_conv.add_argument("--out", default=None)
    p_conv.add_argument("--tol-res", dest="tol_res", type=float, default=None)
    p_conv.add_argument("--force", action="store_true")
    p_conv.set_defaults(func=cmd_converge)

    p_ver = sub.add_parser("verify", help="re-audit a finished run directory")
    p_ver.add_argument("run_dir")
    p_ver.set_defaults(func=cmd_verify)

    p_pt = sub.add_parser("point", help="single-point strain-driven trace")
    p_pt.add_argument("material", help="material TOML file")
    p_pt.add_argument("history", help="history CSV (t + strain components)")
    p_pt.add_argument("--out", default=None)
    p_pt.set_defaults(func=cmd_point)
    return parser


def main(argv=None) -> int:
    _set_thread_env()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
