"""Command-line driver.

Usage: mvstop CONFIG.ini [--output-dir DIR] [--seed N]

The INI file has sections [problem], [grid], [command] and optionally
[output]; unknown sections or keys are rejected.  Exit codes: 0 on
success, 1 on configuration or runtime errors, 2 when a verify run
fails certification.  All
numeric output is written with 17 significant digits so runs are
reproducible byte for byte and fields survive an export/import round
trip exactly.
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .discrete_game import backward_recursion
from .gbm_benchmark import GBMClosedForm, boundary_jump_quantities, closed_form_eval, \
    verify_elliptic_system
from .hjb_regularized import solve_extended_hjb
from .simulate import MCConfig, estimate_objective, sample_cox_stopping, simulate_paths
from .model import CoefficientSpec, Grid, ModelError, ProblemSpec, affine, \
    build_grid, constant, gbm, validate_problem
from .pde_kernel import GridField
from .verify import analytic_perturbation_regularized, certification_ok
from .vi_limit import lambda_continuation, solve_vi

__all__ = ["main", "run", "load_config", "export_field", "import_field",
           "export_solution", "ConfigError", "CertificationFailure"]

FMT = "%.17g"

COMMANDS = {
    "solve-hjb": {"fp_tol", "fp_max_iter", "damping", "clip"},
    "ladder": {"lambdas", "fp_tol", "fp_max_iter", "damping"},
    "solve-vi": {"max_inner"},
    "discrete": {"n_steps"},
    "simulate": {"pi", "t0", "x0", "n_paths", "dt_sim", "seed", "estimator"},
    "verify": {"tol", "corrupt_factor", "fp_tol", "fp_max_iter"},
    "benchmark-gbm": {"x_points"},
}

SECTION_KEYS = {
    "problem": {"drift", "diffusion", "reward", "gamma", "lam", "horizon",
                "variance_factor", "dimension"},
    "grid": {"x_min", "x_max", "n_x", "n_t", "boundary"},
    "output": {"dir", "t_slices"},
}


class ConfigError(Exception):
    """Invalid configuration (exit code 1)."""


class CertificationFailure(Exception):
    """A verify run failed certification (exit code 2)."""


def _parse_coefficient(text: str) -> CoefficientSpec:
    kind, _, rest = text.partition(":")
    try:
        params = [float(p) for p in rest.split(",")] if rest else []
    except ValueError as exc:
        raise ConfigError(f"bad coefficient parameters in {text!r}: {exc}") from exc
    if kind == "constant" and len(params) == 1:
        return constant(params[0])
    if kind == "affine" and len(params) == 2:
        return affine(params[0], params[1])
    if kind == "gbm" and len(params) == 1:
        return gbm(params[0])
    raise ConfigError(f"cannot parse coefficient {text!r} "
                      "(expected constant:v, affine:a,b or gbm:c)")


def load_config(path: str | Path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    for required in ("problem", "grid", "command"):
        if required not in cp:
            raise ConfigError(f"missing [{required}] section")
    for section in cp.sections():
        if section == "command":
            continue
        if section not in SECTION_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(cp[section]) - SECTION_KEYS[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    cmd = cp["command"]
    name = cmd.get("name")
    if name not in COMMANDS:
        raise ConfigError(f"unknown or missing command name {name!r}; "
                          f"choose one of {sorted(COMMANDS)}")
    unknown = set(cmd) - COMMANDS[name] - {"name"}
    if unknown:
        raise ConfigError(f"unknown keys in [command] for {name}: {sorted(unknown)}")
    return cp


def _build_problem(cp: configparser.ConfigParser) -> ProblemSpec:
    p = cp["problem"]
    try:
        spec = ProblemSpec(
            drift=_parse_coefficient(p["drift"]),
            diffusion=_parse_coefficient(p["diffusion"]),
            reward=_parse_coefficient(p["reward"]),
            gamma=p.getfloat("gamma"),
            lam=p.getfloat("lam", fallback=0.0),
            horizon=p.getfloat("horizon"),
            dimension=p.getint("dimension", fallback=1),
            variance_factor=p.get("variance_factor", fallback="half"),
        )
    except (KeyError, ValueError, ModelError) as exc:
        raise ConfigError(f"bad [problem] section: {exc}") from exc
    return spec


def _build_grid(cp: configparser.ConfigParser) -> Grid:
    g = cp["grid"]
    try:
        return build_grid(g.getfloat("x_min"), g.getfloat("x_max"),
                          g.getint("n_x"), g.getint("n_t"),
                          g.get("boundary", fallback="linear-extrapolation"))
    except (KeyError, ValueError, ModelError) as exc:
        raise ConfigError(f"bad [grid] section: {exc}") from exc


# ---------------------------------------------------------------------------
# field export / import

def export_field(field: GridField, path: Path, t_slices=None) -> None:
    """Write a field as CSV rows t,x,value with 17 significant digits."""
    times = field.times
    if t_slices is None:
        rows = range(len(times))
    else:
        rows = [int(np.argmin(np.abs(times - t))) for t in t_slices]
    x = field.grid.nodes
    with open(path, "w") as fh:
        fh.write("t,x,value\n")
        for j in rows:
            t = times[j]
            for i in range(len(x)):
                fh.write(f"{FMT % t},{FMT % x[i]},{FMT % field.values[j, i]}\n")


def import_field(csv_path: Path, meta_path: Path) -> GridField:
    """Rebuild a GridField from an exported CSV plus the run's grid.json."""
    meta = json.loads(Path(meta_path).read_text())
    grid = build_grid(meta["x_min"], meta["x_max"], meta["n_x"], meta["n_t"],
                      meta["boundary_kind"])
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    times = np.unique(data[:, 0])
    values = data[:, 2].reshape(len(times), grid.n_x)
    return GridField(grid, times, values)


def export_solution(sol, directory: str | Path, t_slices=None) -> list[str]:
    """Write a solution's fields (and boundary, when present) as CSV.

    HJBSolution -> V.csv, g.csv, pi.csv; VISolution -> V.csv, g.csv,
    boundary.csv (header-only when there is no crossing).  Returns the
    file names written.  Exports are bit-stable and round-trip exactly
    through import_field.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    pairs = [("V", sol.value), ("g", sol.mean_reward)]
    if hasattr(sol, "intensity"):
        pairs.append(("pi", sol.intensity))
    for name, fld in pairs:
        export_field(fld, directory / f"{name}.csv", t_slices)
        files.append(f"{name}.csv")
    if hasattr(sol, "boundary"):
        _export_boundary(sol.boundary, sol.value.times, directory / "boundary.csv")
        files.append("boundary.csv")
    return files


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _grid_meta(grid: Grid, spec: ProblemSpec) -> dict:
    return {"x_min": grid.x_min, "x_max": grid.x_max, "n_x": grid.n_x,
            "n_t": grid.n_t, "boundary_kind": grid.boundary_kind,
            "horizon": spec.horizon}


def _export_boundary(boundary, times, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("t,c\n")
        for j, crossings in enumerate(boundary):
            for c in crossings:
                fh.write(f"{FMT % times[j]},{FMT % c}\n")


# ---------------------------------------------------------------------------
# commands

def _cmd_solve_hjb(cp, spec, grid, outdir, t_slices):
    cmd = cp["command"]
    if spec.lam <= 0:
        raise ConfigError("solve-hjb requires lam > 0 in [problem]")
    sol = solve_extended_hjb(spec, grid,
                             fp_tol=cmd.getfloat("fp_tol", fallback=1e-8),
                             fp_max_iter=cmd.getint("fp_max_iter", fallback=60),
                             damping=cmd.getfloat("damping", fallback=1.0),
                             clip=cmd.getfloat("clip", fallback=50.0))
    files = export_solution(sol, outdir, t_slices)
    report = {"lam": sol.lam, "kappa": sol.kappa, "converged": sol.converged,
              "fixed_point_iterations": sol.fixed_point_iterations,
              "exponent_clip_hits": sol.exponent_clip_hits,
              "gap_history": sol.gap_history, "residual": sol.residual}
    return report, files


def _cmd_ladder(cp, spec, grid, outdir, t_slices):
    cmd = cp["command"]
    try:
        lambdas = [float(s) for s in cmd["lambdas"].split(",")]
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"ladder needs lambdas = comma-separated floats: {exc}") from exc
    ladder = lambda_continuation(spec, grid, lambdas,
                                 fp_tol=cmd.getfloat("fp_tol", fallback=1e-7),
                                 fp_max_iter=cmd.getint("fp_max_iter", fallback=60),
                                 damping=cmd.getfloat("damping", fallback=1.0))
    last = ladder.solutions[-1]
    files = export_solution(last, outdir, t_slices)
    report = {"lambdas": ladder.lambdas, "gaps": ladder.gaps,
              "converged": [s.converged for s in ladder.solutions],
              "final_residual": last.residual}
    return report, files


def _cmd_solve_vi(cp, spec, grid, outdir, t_slices):
    cmd = cp["command"]
    sol = solve_vi(spec, grid, max_inner=cmd.getint("max_inner", fallback=50))
    files = export_solution(sol, outdir, t_slices)
    report = {"kappa": sol.kappa, "mask_converged": sol.mask_converged,
              "stopped_fraction": float(np.mean(sol.stop_mask)),
              "boundary_t0": sol.boundary[0]}
    return report, files


def _cmd_discrete(cp, spec, grid, outdir, t_slices):
    cmd = cp["command"]
    try:
        n_steps = cmd.getint("n_steps")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"discrete needs integer n_steps: {exc}") from exc
    if n_steps is None:
        raise ConfigError("discrete needs n_steps")
    eq = backward_recursion(spec, grid, n_steps)
    vf = GridField(grid, eq.times, eq.value)
    gf = GridField(grid, eq.times, eq.mean_reward)
    export_field(vf, outdir / "V.csv", t_slices)
    export_field(gf, outdir / "g.csv", t_slices)
    report = {"n_steps": n_steps, "dt": eq.dt,
              "recursion_identity_defect": eq.recursion_identity_defect,
              "stopped_fraction": float(np.mean(eq.stop_mask))}
    return report, ["V.csv", "g.csv"]


def _cmd_simulate(cp, spec, grid, outdir, t_slices, seed_override):
    cmd = cp["command"]
    try:
        t0 = cmd.getfloat("t0", fallback=0.0)
        x0 = cmd.getfloat("x0")
        n_paths = cmd.getint("n_paths")
        dt_sim = cmd.getfloat("dt_sim")
        seed = seed_override if seed_override is not None \
            else cmd.getint("seed", fallback=0)
        pi_text = cmd.get("pi")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [command] for simulate: {exc}") from exc
    if x0 is None or n_paths is None or dt_sim is None or pi_text is None:
        raise ConfigError("simulate needs x0, n_paths, dt_sim and pi")
    estimator = cmd.get("estimator", fallback="both")
    if estimator not in ("raw", "conditional", "both"):
        raise ConfigError("estimator must be raw, conditional or both")
    kind, _, rest = pi_text.partition(":")
    if kind == "constant":
        pi = float(rest)
    elif kind == "csv":
        run_dir = Path(rest)
        pi = import_field(run_dir / "pi.csv", run_dir / "grid.json")
    else:
        raise ConfigError(f"cannot parse pi source {pi_text!r} "
                          "(expected constant:v or csv:run_dir)")
    mc = MCConfig(n_paths=n_paths, dt_sim=dt_sim, master_seed=seed)
    sample = sample_cox_stopping(simulate_paths(spec, t0, x0, mc), pi)
    lam = spec.lam if spec.lam > 0 else None
    report = {"t0": t0, "x0": x0, "n_paths": n_paths, "dt_sim": dt_sim,
              "seed": seed,
              "stopped_fraction": float(np.mean(sample.stopped_by_intensity))}
    kinds = ("raw", "conditional") if estimator == "both" else (estimator,)
    for k in kinds:
        est = estimate_objective(sample, spec, kind=k, lam=lam)
        report[k] = {
            "mean_reward": [est.mean_reward.mean, est.mean_reward.se],
            "second_moment": [est.second_moment.mean, est.second_moment.se],
            "objective": [est.objective.mean, est.objective.se],
        }
    return report, []


def _cmd_verify(cp, spec, grid, outdir, t_slices):
    cmd = cp["command"]
    if spec.lam <= 0:
        raise ConfigError("verify requires lam > 0 in [problem]")
    sol = solve_extended_hjb(spec, grid,
                             fp_tol=cmd.getfloat("fp_tol", fallback=1e-8),
                             fp_max_iter=cmd.getint("fp_max_iter", fallback=60))
    tol = cmd.getfloat("tol", fallback=1e-8)
    factor = cmd.getfloat("corrupt_factor", fallback=None)
    intensity = None
    if factor is not None:
        intensity = GridField(grid, sol.intensity.times,
                              factor * sol.intensity.values)
    results = analytic_perturbation_regularized(sol, spec, intensity=intensity,
                                                tol=tol)
    report = {"tol": tol,
              "corrupt_factor": factor,
              "probes": [{"probe": r.probe, "gain": r.gain,
                          "location": list(r.location), "passed": r.passed}
                         for r in results],
              "ok": certification_ok(results),
              "residual": sol.residual}
    return report, []


def _cmd_benchmark_gbm(cp, spec, grid, outdir, t_slices):
    cmd = cp["command"]
    if spec.drift.kind != "gbm" or spec.diffusion.kind != "gbm":
        raise ConfigError("benchmark-gbm needs gbm drift and diffusion")
    mu = spec.drift.params[0]
    sigma_sq = spec.diffusion.params[0] ** 2
    try:
        cf = GBMClosedForm(mu, sigma_sq, spec.gamma)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    pts = cmd.get("x_points", fallback=None)
    xs = np.array([float(s) for s in pts.split(",")]) if pts else grid.nodes
    V, g = closed_form_eval(cf, xs)
    report = {"rho": cf.rho, "threshold": cf.threshold,
              "values": [{"x": float(x), "V": float(v), "g": float(gg)}
                         for x, v, gg in zip(np.atleast_1d(xs),
                                             np.atleast_1d(V), np.atleast_1d(g))],
              "elliptic": verify_elliptic_system(cf, grid.nodes),
              "boundary": boundary_jump_quantities(cf)}
    return report, []


# ---------------------------------------------------------------------------

def run(config_path: str, output_dir: str | None = None,
        seed: int | None = None) -> int:
    start = time.monotonic()
    cp = load_config(config_path)
    spec = _build_problem(cp)
    grid = _build_grid(cp)
    name = cp["command"]["name"]
    out = cp["output"] if "output" in cp else {}
    outdir = Path(output_dir if output_dir is not None else out.get("dir", "out"))
    outdir.mkdir(parents=True, exist_ok=True)
    t_slices = None
    if "t_slices" in out:
        t_slices = [float(s) for s in out["t_slices"].split(",")]
    rep = validate_problem(spec, grid)
    if not rep.ok and name != "benchmark-gbm":
        raise ConfigError("invalid problem: " + "; ".join(rep.violations))

    if name == "simulate":
        report, files = _cmd_simulate(cp, spec, grid, outdir, t_slices, seed)
    else:
        handler = {"solve-hjb": _cmd_solve_hjb, "ladder": _cmd_ladder,
                   "solve-vi": _cmd_solve_vi, "discrete": _cmd_discrete,
                   "verify": _cmd_verify, "benchmark-gbm": _cmd_benchmark_gbm}[name]
        report, files = handler(cp, spec, grid, outdir, t_slices)

    _write_json(_grid_meta(grid, spec), outdir / "grid.json")
    _write_json(report, outdir / "report.json")
    manifest = {
        "version": __version__,
        "command": name,
        "config": {s: dict(cp[s]) for s in cp.sections()},
        "seed_override": seed,
        "files": sorted(files + ["grid.json", "report.json", "manifest.json"]),
        # wall-clock timing; the only non-deterministic entry, confined here
        "elapsed_seconds": round(time.monotonic() - start, 3),
    }
    _write_json(manifest, outdir / "manifest.json")
    if name == "verify" and not report["ok"]:
        raise CertificationFailure(
            "certification failed; failing probes: "
            + ", ".join(f"{p['probe']}@{tuple(p['location'])}"
                        for p in report["probes"] if not p["passed"]))
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="mvstop",
                                 description="Equilibrium mean-variance stopping toolkit")
    ap.add_argument("config", help="INI configuration file")
    ap.add_argument("--output-dir", default=None)
    ap.add_argument("--seed", type=int, default=None,
                    help="override the simulation seed from the config")
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return run(args.config, args.output_dir, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except CertificationFailure as exc:
        print(f"certification failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failure surface
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
