"""Command-line driver for parameter sweeps.

    nhxxz <experiment> --config run.json [--out DIR] [--threads K] [--format csv|json]

Every run writes one result table (CSV or JSON) plus ``manifest.json`` with the
resolved configuration, library versions, wall time and per-point status.
Exit codes: 0 all points succeeded, 1 some point failed, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy

from . import bethe, dynamics, spectral, thermo
from .model import DENSE_CAP, ModelParams, assemble_dense, build_sector_basis

SCHEMA_VERSION = 1
EXPERIMENTS = ("phase_diagram", "spectrum", "bethe_solve", "dynamics", "compare", "scaling")

COLUMNS = {
    "phase_diagram": ["delta", "g", "n", "m", "phase", "max_abs_imag"],
    "spectrum": ["delta", "g", "n", "m", "index", "re", "im", "participation"],
    "bethe_solve": ["delta", "g", "n", "m", "re_e", "im_e", "residual"],
    "dynamics": ["delta", "g", "n", "m", "t_final", "sz_n_final", "im_estimate_final", "series"],
    "compare": ["delta", "g", "n", "m", "im_ed", "im_ba", "abs_diff"],
    "scaling": ["delta", "g", "n", "m", "inv_n", "value", "count"],
}

_DEFAULTS = {
    "model": {"n": None, "delta": None, "g": None, "m": None, "delta_prime": 0.0},
    "solver": {
        "tol": 1e-8,
        "max_iterations": 1_000_000,
        "dense_cap": DENSE_CAP,
        "target": "auto",
        "pt_tol": 1e-9,
        "method": "auto",
        "g_initial": 1.5,
        "step_delta": 0.01,
        "step_g": 0.01,
        "margin": 0.05,
        "via": [],
        "which": "auto",
    },
    "dynamics": {"t_max": 100.0, "dt": None, "record_every": 50, "initial": "domain_wall"},
    "scaling": {"kind": "two_magnon", "window": 0.3},
    "output": {"dir": "out", "format": "csv"},
    "seed": 0,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    experiment: str
    grid: list
    model: dict
    solver: dict
    dynamics: dict
    scaling: dict
    output: dict
    seed: int = 0
    raw: dict = field(default_factory=dict)


# -- configuration ---------------------------------------------------------

def _axis(name: str, spec, integer: bool = False) -> list:
    """A scalar, a list, or {start, stop, step} (inclusive of stop)."""
    if spec is None:
        raise ConfigError(f"model.{name}: required")
    if isinstance(spec, dict):
        extra = set(spec) - {"start", "stop", "step"}
        if extra:
            raise ConfigError(f"model.{name}: unknown keys {sorted(extra)}")
        try:
            start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
        except KeyError as exc:
            raise ConfigError(f"model.{name}: range needs start, stop and step") from exc
        if step <= 0:
            raise ConfigError(f"model.{name}: step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = [round(start + k * step, 12) for k in range(max(count, 0))]
    elif isinstance(spec, list):
        values = list(spec)
    else:
        values = [spec]
    if not values:
        raise ConfigError(f"model.{name}: empty range")
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"model.{name}: expected numbers, got {v!r}")
        if integer and int(v) != v:
            raise ConfigError(f"model.{name}: expected integers, got {v!r}")
    return [int(v) for v in values] if integer else [float(v) for v in values]


def _merge(section: str, given, defaults: dict) -> dict:
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigError(f"{section}: expected an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}")
    out = dict(defaults)
    out.update(given)
    return out


def validate_config(data: dict, experiment: str | None = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a JSON object")
    unknown = set(data) - {"experiment", *_DEFAULTS}
    if unknown:
        raise ConfigError(f"top level: unknown keys {sorted(unknown)}")
    exp = data.get("experiment", experiment)
    if exp is None:
        raise ConfigError("experiment: required")
    exp = exp.replace("-", "_")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown value {exp!r}")
    if experiment is not None and exp != experiment.replace("-", "_"):
        raise ConfigError(f"experiment: config says {exp!r} but subcommand is {experiment!r}")

    model = _merge("model", data.get("model"), _DEFAULTS["model"])
    solver = _merge("solver", data.get("solver"), _DEFAULTS["solver"])
    dyn = _merge("dynamics", data.get("dynamics"), _DEFAULTS["dynamics"])
    scal = _merge("scaling", data.get("scaling"), _DEFAULTS["scaling"])
    output = _merge("output", data.get("output"), _DEFAULTS["output"])
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed: expected an integer")

    ns = _axis("n", model["n"], integer=True)
    deltas = _axis("delta", model["delta"])
    gs = _axis("g", model["g"])
    if model["m"] is not None and (isinstance(model["m"], bool) or not isinstance(model["m"], int)):
        raise ConfigError("model.m: expected an integer or null (N/2)")
    if not isinstance(model["delta_prime"], (int, float)) or isinstance(model["delta_prime"], bool):
        raise ConfigError("model.delta_prime: expected a number")
    for n in ns:
        if n < 2 or n % 2:
            raise ConfigError(f"model.n: sizes must be even and >= 2, got {n}")
        if model["m"] is not None and not 0 <= model["m"] <= n:
            raise ConfigError(f"model.m: {model['m']} outside [0, {n}]")
    if any(g < 0 for g in gs):
        raise ConfigError("model.g: must be non-negative")

    for key in ("tol", "pt_tol", "step_delta", "step_g", "margin"):
        if not isinstance(solver[key], (int, float)) or not solver[key] > 0:
            raise ConfigError(f"solver.{key}: must be a positive number")
    if not isinstance(solver["dense_cap"], int) or solver["dense_cap"] < 1:
        raise ConfigError("solver.dense_cap: must be a positive integer")
    if not isinstance(solver["max_iterations"], int) or solver["max_iterations"] < 1:
        raise ConfigError("solver.max_iterations: must be a positive integer")
    if solver["target"] not in ("auto", *spectral._KINDS):
        raise ConfigError(f"solver.target: unknown value {solver['target']!r}")
    if solver["which"] not in ("auto", bethe.STEADY, bethe.GROUND):
        raise ConfigError(f"solver.which: unknown value {solver['which']!r}")
    if solver["method"] not in ("auto", "arnoldi", "subspace"):
        raise ConfigError(f"solver.method: unknown value {solver['method']!r}")
    if not isinstance(solver["g_initial"], (int, float)) or solver["g_initial"] <= 1:
        raise ConfigError("solver.g_initial: must exceed 1")
    try:
        solver["via"] = [[float(d), float(g)] for d, g in solver["via"]]
    except (TypeError, ValueError) as exc:
        raise ConfigError("solver.via: expected a list of [delta, g] pairs") from exc

    if dyn["dt"] is not None and not (isinstance(dyn["dt"], (int, float)) and dyn["dt"] > 0):
        raise ConfigError("dynamics.dt: must be positive or null (0.02/g)")
    if not isinstance(dyn["t_max"], (int, float)) or dyn["t_max"] <= 0:
        raise ConfigError("dynamics.t_max: must be positive (units of 1/g)")
    if not isinstance(dyn["record_every"], int) or dyn["record_every"] < 1:
        raise ConfigError("dynamics.record_every: must be a positive integer")
    if dyn["initial"] not in ("domain_wall", "hermitian_ground"):
        raise ConfigError(f"dynamics.initial: unknown value {dyn['initial']!r}")
    if scal["kind"] not in ("two_magnon", "ed", "bethe"):
        raise ConfigError(f"scaling.kind: unknown value {scal['kind']!r}")
    if not isinstance(scal["window"], (int, float)) or scal["window"] <= 0:
        raise ConfigError("scaling.window: must be positive")
    if output["format"] not in ("csv", "json"):
        raise ConfigError(f"output.format: unknown value {output['format']!r}")
    if not isinstance(output["dir"], str) or not output["dir"]:
        raise ConfigError("output.dir: expected a non-empty path")

    # grid order is lexicographic in (delta, g, n)
    grid = [(d, g, n) for d in deltas for g in gs for n in ns]
    cfg = RunConfig(exp, grid, model, solver, dyn, scal, output, seed,
                    raw={"experiment": exp, "model": model, "solver": solver, "dynamics": dyn,
                         "scaling": scal, "output": output, "seed": seed})
    _check_caps(cfg)
    return cfg


def _sector_m(cfg: RunConfig, n: int) -> int:
    if cfg.experiment == "scaling" and cfg.scaling["kind"] == "two_magnon" and cfg.model["m"] is None:
        return 2
    return n // 2 if cfg.model["m"] is None else cfg.model["m"]


def _check_caps(cfg: RunConfig):
    dense = cfg.experiment in ("phase_diagram", "spectrum") or (
        cfg.experiment == "scaling" and cfg.scaling["kind"] == "two_magnon")
    if not dense:
        return
    cap = cfg.solver["dense_cap"]
    for _, _, n in cfg.grid:
        dim = comb(n, _sector_m(cfg, n))
        if dim > cap:
            raise ConfigError(
                f"model.n: dense spectrum at n={n} needs dimension {dim} > solver.dense_cap {cap}")


def parse_config(path: str, experiment: str | None = None) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return validate_config(data, experiment)


# -- per-point work --------------------------------------------------------

def _params(cfg, delta, g, n):
    return ModelParams(n, delta, g, float(cfg.model["delta_prime"]))


def _target_kind(cfg, delta):
    t = cfg.solver["target"]
    if t != "auto":
        return t
    return spectral.MAX_IMAG if delta >= 0 else spectral.MIN_REAL


def _targeted(cfg, params, m):
    basis = build_sector_basis(params.n_sites, m)
    target = spectral.EigenTarget(_target_kind(cfg, params.delta), cfg.solver["tol"],
                                  cfg.solver["max_iterations"])
    return spectral.targeted_eigenpair(params, basis, target, seed=cfg.seed,
                                       method=cfg.solver["method"])


def _point_phase_diagram(cfg, params, m):
    basis = build_sector_basis(params.n_sites, m)
    recs = spectral.full_spectrum(assemble_dense(params, basis, cfg.solver["dense_cap"]))
    pt = spectral.classify_pt(spectral.spectrum_eigenvalues(recs), cfg.solver["pt_tol"])
    return [[params.delta, params.g, params.n_sites, m, pt.phase, pt.max_abs_imag]], {}


def _point_spectrum(cfg, params, m):
    basis = build_sector_basis(params.n_sites, m)
    recs = spectral.full_spectrum(assemble_dense(params, basis, cfg.solver["dense_cap"]),
                                  want_vectors=True, basis=basis)
    rows = [[params.delta, params.g, params.n_sites, m, i, r.eigenvalue.real,
             r.eigenvalue.imag, r.participation] for i, r in enumerate(recs)]
    return rows, {}


def _path(cfg):
    s = cfg.solver
    return bethe.ContinuationPath(g_initial=s["g_initial"], step_delta=s["step_delta"],
                                  step_g=s["step_g"], margin=s["margin"],
                                  via=tuple(tuple(p) for p in s["via"]))


def _which(cfg, delta):
    w = cfg.solver["which"]
    if w != "auto":
        return w
    return bethe.STEADY if delta >= 0 else bethe.GROUND


def _point_bethe(cfg, params, m):
    state = bethe.adiabatic_solve(params, m, _path(cfg), which=_which(cfg, params.delta))
    row = [params.delta, params.g, params.n_sites, m, state.energy.real, state.energy.imag,
           state.residual]
    return [row], {"bethe_state": state.to_json()}


def _point_dynamics(cfg, params, m, out_dir, index):
    basis = build_sector_basis(params.n_sites, m)
    d = cfg.dynamics
    if d["initial"] == "domain_wall":
        psi0 = dynamics.domain_wall_state(basis)
    else:
        psi0 = dynamics.hermitian_ground_state(params.delta, params.n_sites, basis)
    unit = 1.0 / params.g if params.g > 0 else 1.0
    dt = d["dt"] if d["dt"] is not None else 0.02 * unit
    ecfg = dynamics.EvolutionConfig(dt=dt, t_max=d["t_max"] * unit, record_every=d["record_every"])
    ts = dynamics.evolve(params, psi0, ecfg)
    name = f"dynamics_{index:04d}.csv"
    with open(os.path.join(out_dir, name), "w", newline="") as fh:
        ts.to_csv(fh)
    prof = ts.values[dynamics.FULL_PROFILE][-1]
    row = [params.delta, params.g, params.n_sites, m, ts.times[-1], prof[-1],
           ts.values[dynamics.IM_ESTIMATE][-1], name]
    return [row], {"series": name}


def _reference_im(delta, g):
    return thermo.im_energy(delta, g).im_total


def _point_compare(cfg, params, m):
    rec = _targeted(cfg, params, m)
    im_ba = _reference_im(params.delta, params.g)
    im_ed = rec.eigenvalue.imag
    row = [params.delta, params.g, params.n_sites, m, im_ed, im_ba, abs(im_ed - im_ba)]
    return [row], {"eigenvalue": [rec.eigenvalue.real, rec.eigenvalue.imag],
                   "residual": rec.residual}


def _point_scaling(cfg, params, m):
    kind = cfg.scaling["kind"]
    if kind == "two_magnon":
        basis = build_sector_basis(params.n_sites, m)
        ev = np.linalg.eigvals(assemble_dense(params, basis, cfg.solver["dense_cap"]))
        value, count = spectral.positive_continuum_mean(ev, cfg.scaling["window"])
    elif kind == "ed":
        value, count = _targeted(cfg, params, m).eigenvalue.imag, 1
    else:
        state = bethe.adiabatic_solve(params, m, _path(cfg), which=_which(cfg, params.delta))
        value, count = state.energy.imag, 1
    n = params.n_sites
    return [[params.delta, params.g, n, m, 1.0 / n, value, count]], {}


def _run_point(cfg: RunConfig, index: int, point, out_dir: str) -> dict:
    delta, g, n = point
    m = _sector_m(cfg, n)
    t0 = time.perf_counter()
    entry = {"index": index, "delta": delta, "g": g, "n": n, "m": m}
    try:
        params = _params(cfg, delta, g, n)
        exp = cfg.experiment
        if exp == "phase_diagram":
            rows, extra = _point_phase_diagram(cfg, params, m)
        elif exp == "spectrum":
            rows, extra = _point_spectrum(cfg, params, m)
        elif exp == "bethe_solve":
            rows, extra = _point_bethe(cfg, params, m)
        elif exp == "dynamics":
            rows, extra = _point_dynamics(cfg, params, m, out_dir, index)
        elif exp == "compare":
            rows, extra = _point_compare(cfg, params, m)
        else:
            rows, extra = _point_scaling(cfg, params, m)
        entry.update(status="ok", rows=rows, **extra)
    except Exception as exc:  # recorded per point, reported through the exit code
        diag = getattr(exc, "diagnostics", {}) or {}
        entry.update(status="failed", rows=[], error=f"{type(exc).__name__}: {exc}",
                     diagnostics={k: v for k, v in diag.items()
                                  if isinstance(v, (int, float, str, list, tuple)) and k != "state"})
    entry["seconds"] = round(time.perf_counter() - t0, 3)
    return entry


# -- output ----------------------------------------------------------------

def format_cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return dynamics.format_float(x)
    return str(x)


def _json_cell(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_table(path: str, columns: list, rows: list, fmt: str):
    if fmt == "csv":
        lines = [",".join(columns)]
        lines += [",".join(format_cell(c) for c in row) for row in rows]
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        recs = [{c: _json_cell(v) for c, v in zip(columns, row)} for row in rows]
        with open(path, "w") as fh:
            json.dump({"columns": columns, "rows": recs}, fh, indent=1, sort_keys=False)
            fh.write("\n")


def _scaling_fit(cfg, entries):
    pts = [(r[2], r[5]) for e in entries if e["status"] == "ok" for r in e["rows"]]
    if len({n for n, _ in pts}) < 2:
        return None
    fit = spectral.fit_inverse_n([n for n, _ in pts], [v for _, v in pts])
    return {"model": "a + b/N", "intercept": fit.intercept, "slope": fit.slope,
            "r_squared": fit.r_squared}


def run_experiment(cfg: RunConfig, threads: int = 1) -> dict:
    out_dir = cfg.output["dir"]
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise ConfigError(f"output.dir: {out_dir} is not writable")
    t0 = time.perf_counter()
    jobs = list(enumerate(cfg.grid))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(lambda j: _run_point(cfg, j[0], j[1], out_dir), jobs))
    else:
        entries = [_run_point(cfg, i, p, out_dir) for i, p in jobs]

    # the collector writes rows in grid order regardless of completion order
    rows = [r for e in sorted(entries, key=lambda e: e["index"]) for r in e["rows"]]
    fmt = cfg.output["format"]
    table = f"{cfg.experiment}.{fmt}"
    write_table(os.path.join(out_dir, table), COLUMNS[cfg.experiment], rows, fmt)

    points = []
    for e in entries:
        p = {k: v for k, v in e.items() if k != "rows"}
        points.append(p)
    if cfg.experiment == "bethe_solve" and fmt == "json":
        for e in entries:
            if e["status"] == "ok":
                name = f"bethe_state_{e['index']:04d}.json"
                with open(os.path.join(out_dir, name), "w") as fh:
                    json.dump(e["bethe_state"], fh, indent=1)
                    fh.write("\n")
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "config": cfg.raw,
        "columns": COLUMNS[cfg.experiment],
        "table": table,
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__, "nhxxz": _package_version()},
        "threads": threads,
        "wall_time_seconds": round(time.perf_counter() - t0, 3),
        "points": points,
        "n_failed": sum(e["status"] != "ok" for e in entries),
    }
    if cfg.experiment == "scaling":
        manifest["fit"] = _scaling_fit(cfg, entries)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, default=_json_cell)
        fh.write("\n")
    return manifest


def _package_version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:
        return "unknown"


# -- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nhxxz", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for exp in EXPERIMENTS:
        p = sub.add_parser(exp.replace("_", "-"), help=f"run the {exp.replace('_', ' ')} experiment")
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for grid points")
        p.add_argument("--format", choices=("csv", "json"), help="table format (overrides output.format)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    experiment = args.command.replace("-", "_")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = parse_config(args.config, experiment)
        if args.out:
            cfg.output["dir"] = args.out
        if args.format:
            cfg.output["format"] = args.format
        manifest = run_experiment(cfg, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    failed = manifest["n_failed"]
    print(f"{cfg.experiment}: {len(manifest['points'])} points, {failed} failed, "
          f"output in {cfg.output['dir']}")
    for p in manifest["points"]:
        if p["status"] != "ok":
            print(f"  point {p['index']} (delta={p['delta']}, g={p['g']}, n={p['n']}): {p['error']}",
                  file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
