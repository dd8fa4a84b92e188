"""Command-line front end: ``henon-nehari {eigen,solve,instanton,scan,diag}``.

Exit codes: 0 ok, 1 configuration error, 2 numerical failure, 3 non-convergence.
Flags override values read from ``--config FILE`` (plain ``key = value`` lines).
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import morse_index, orient, polarization_invariants, sign_change
from .grid import ProblemSpec, build_grid, read_field_csv, write_field_csv
from .instanton import (CSV_COLUMNS, DEFAULT_EPS_GRID, loglog_slope, sobolev_constant,
                        threshold, verify_threshold)
from .nehari import NehariConfig, NehariError, minimize_over_Y
from .spectral import (InsufficientSpectrumError, SpectralError, assemble_operator,
                       dirichlet_spectrum, split_space)
from .setup import Problem, _enough_spectrum

log = logging.getLogger("henon_nehari")

SCHEMA = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_UNCONVERGED = 0, 1, 2, 3
TIMESTAMP_KEY = "generated_at"


class ConfigError(ValueError):
    pass


_AUTO = re.compile(
    r"^auto\(\s*([0-9.eE+-]+)\s*(?:\*|·|x)?\s*(?:l|λ|lambda_?|lam_?)\s*_?(\d+)\s*\)$")


def parse_lambda(text):
    """Return ("abs", value) or ("auto", factor, k) for ``auto(c*lk)``."""
    text = str(text).strip()
    m = _AUTO.match(text)
    if m:
        factor, k = float(m.group(1)), int(m.group(2))
        if k < 1 or factor < 0:
            raise ConfigError(f"bad lambda expression {text!r}")
        return ("auto", factor, k)
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"lambda must be a number or auto(c*lk), got {text!r}") from None
    if value < 0 or not np.isfinite(value):
        raise ConfigError(f"lambda must be finite and >= 0, got {value}")
    return ("abs", value)


def parse_floats(text):
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    parts = [p for p in re.split(r"[,\s]+", str(text).strip()) if p]
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


# key -> (converter, default) per subcommand
_COMMON = {
    "dim": (int, 5),
    "nr": (int, 256),
    "ntheta": (int, 64),
    "k_eigs": (int, 4),
    "alpha": (float, 0.0),
    "seed": (int, 0),
    "out": (str, "."),
}
_SOLVER = {
    "tol_c": (float, 1e-9),
    "tol_g": (float, 1e-6),
    "max_iter": (int, 3000),
    "seed_policy": (str, "instanton"),
}
KEYS = {
    "eigen": {**_COMMON, "eigenfields": (_bool, False), "format": (str, "json")},
    "solve": {**_COMMON, **_SOLVER, "lambda": (str, "auto(1.1*l1)"),
              "require_m_positive": (_bool, False)},
    "instanton": {**_COMMON, "lambda": (str, "auto(1.1*l1)"), "eps_grid": (parse_floats, list(DEFAULT_EPS_GRID)),
                  "margin": (float, 0.0), "tol_c": (float, 1e-9)},
    "scan": {**_COMMON, **_SOLVER, "lambda": (str, "auto(1.1*l1)"), "param": (str, "lambda"),
             "start": (str, None), "stop": (str, None), "num": (int, 5), "workers": (int, 1)},
    "diag": {**_COMMON, **_SOLVER, "lambda": (str, "auto(1.1*l1)"), "field": (str, None)},
}


def read_config_file(path, command):
    allowed = KEYS[command]
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "k":
            key = "k_eigs"
        if key not in allowed:
            raise ConfigError(f"{path}:{n}: unknown key {key!r} for '{command}'")
        out[key] = value
    return out


def resolve_config(command, args):
    table = KEYS[command]
    cfg = {k: d for k, (_, d) in table.items()}
    if getattr(args, "config", None):
        cfg.update(read_config_file(args.config, command))
    for key in table:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    for key, (conv, _) in table.items():
        if cfg[key] is not None and conv is not str:
            try:
                cfg[key] = conv(cfg[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {cfg[key]!r} ({exc})") from None
    _validate(command, cfg)
    return cfg


def _validate(command, cfg):
    if cfg["dim"] < 3:
        raise ConfigError(f"dimension must be >= 3 (got {cfg['dim']})")
    if cfg["ntheta"] % 2:
        raise ConfigError(f"ntheta must be even (got {cfg['ntheta']})")
    if cfg["nr"] < 8 or cfg["ntheta"] < 4:
        raise ConfigError("grid too small: need nr >= 8 and ntheta >= 4")
    if cfg["alpha"] < 0:
        raise ConfigError("alpha must be >= 0")
    if cfg["k_eigs"] < 1:
        raise ConfigError("k must be >= 1")
    if "lambda" in cfg:
        parse_lambda(cfg["lambda"])
    if "seed_policy" in cfg and cfg["seed_policy"] not in ("instanton", "random"):
        raise ConfigError("seed_policy must be 'instanton' or 'random'")
    if command == "eigen" and cfg["format"] not in ("json", "csv"):
        raise ConfigError("format must be json or csv")
    if command == "instanton":
        if not cfg["eps_grid"]:
            raise ConfigError("eps grid is empty")
        if cfg["margin"] < 0:
            raise ConfigError("margin must be >= 0")
    if command == "scan":
        if cfg["param"] not in ("lambda", "alpha"):
            raise ConfigError("param must be lambda or alpha")
        if cfg["num"] < 1:
            raise ConfigError("scan range has no points")
        if cfg["start"] is None or cfg["stop"] is None:
            raise ConfigError("scan needs --start and --stop")
    if command == "diag" and not cfg["field"]:
        raise ConfigError("diag needs --field")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serialisable: {type(obj)}")


def _clean(obj):
    """Replace non-finite floats by None so the output is strict JSON."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not np.isfinite(obj):
        return None
    return obj


def write_report(path, command, cfg, result, grid=None, notes=()):
    report = {
        "schema": SCHEMA,
        "command": command,
        "version": __version__,
        "config": cfg,
        "grid": None if grid is None else grid.metadata(),
        "result": result,
        "notes": list(notes),
        TIMESTAMP_KEY: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    text = json.dumps(_clean(json.loads(json.dumps(report, default=_json_default))),
                      sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")
    return report


NOTES_SYMMETRIC = [
    "Computed in the axisymmetric (foliated Schwarz) class: minimality is over that class only.",
    "m counts reduced (axisymmetric) eigenvalues <= lambda, not full-space multiplicities.",
    "The Morse index is the symmetric-class index.",
]


def build_problem(cfg, lam_text=None, alpha=None) -> Problem:
    """Grid, operator and enough spectrum to resolve and bracket lambda."""
    N = cfg["dim"]
    base = ProblemSpec(N, 0.0, cfg["alpha"] if alpha is None else alpha)
    grid = build_grid(base, cfg["nr"], cfg["ntheta"])
    op = assemble_operator(grid)
    lam_text = cfg.get("lambda", "0") if lam_text is None else lam_text
    how = parse_lambda(lam_text)
    k = max(cfg["k_eigs"], how[2] + 1 if how[0] == "auto" else 1)
    spectrum = dirichlet_spectrum(op, k, seed=cfg["seed"])
    lam = how[1] * spectrum.eigvals[how[2] - 1] if how[0] == "auto" else how[1]
    spectrum = _enough_spectrum(op, lam, spectrum)
    spec = base.with_lambda(lam)
    try:
        split = split_space(spec, spectrum)
    except InsufficientSpectrumError:  # a ValueError subclass, but a numerical failure
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if N == 4:
        log.info("N = 4: lambda must avoid the spectrum; bubble asymptotics carry a log factor "
                 "and are reported without slope fits")
    return Problem(spec, grid, op, spectrum, split)


def _out(cfg, name):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def cmd_eigen(cfg):
    spec = ProblemSpec(cfg["dim"], 0.0, cfg["alpha"])
    grid = build_grid(spec, cfg["nr"], cfg["ntheta"])
    op = assemble_operator(grid)
    spectrum = dirichlet_spectrum(op, cfg["k_eigs"], seed=cfg["seed"])
    result = {"eigenvalues": spectrum.eigvals.tolist(), "residuals": spectrum.residuals.tolist()}
    if cfg["eigenfields"]:
        files = []
        for j in range(len(spectrum)):
            path = _out(cfg, f"eigenfield_{j + 1}.csv")
            write_field_csv(path, spectrum.eigfield(j))
            files.append(path.name)
        result["eigenfield_files"] = files
    write_report(_out(cfg, "eigen.json"), "eigen", cfg, result, grid,
                 notes=["Eigenvalues of the axisymmetric reduction, each listed once."])
    if cfg["format"] == "csv":
        path = _out(cfg, "eigen.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "eigenvalue"])
            for j, lam in enumerate(spectrum.eigvals, 1):
                w.writerow([j, repr(float(lam))])
    print(json.dumps(result["eigenvalues"]))
    return EXIT_OK


def solve_point(cfg, problem: Problem):
    """Run the minimisation plus diagnostics; returns (result dict, oriented field, converged)."""
    ncfg = NehariConfig(tol_c=cfg["tol_c"], tol_g=cfg["tol_g"], max_iter=cfg["max_iter"],
                        seed_policy=cfg["seed_policy"], seed=cfg["seed"])
    rep = minimize_over_Y(problem.split, problem.spec, None, problem.op, ncfg)
    u = orient(rep.u)
    thr = threshold(problem.spec.N)
    e1 = problem.spectrum.eigfield(0)
    sc = sign_change(u, None, e1)
    result = {
        "lambda": problem.spec.lam,
        "alpha": problem.spec.alpha,
        "m": problem.split.m,
        "eigenvalues": problem.spectrum.eigvals.tolist(),
        "level_c": rep.level_c,
        "threshold": thr,
        "sobolev_constant": sobolev_constant(problem.spec.N),
        "below_threshold": bool(rep.level_c < thr),
        "threshold_margin_rel": (thr - rep.level_c) / thr,
        "grad_norm": rep.grad_norm,
        "constraint_residual": rep.constraint_residual,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "fiber_t": rep.f,
        "fiber_z": rep.g_coords.tolist(),
        "changes_sign": bool(sc),
        "min_u": sc.min,
        "max_u": sc.max,
        "e1_integral": sc.e1_integral,
        "theta_monotone_defect": rep.theta_monotone_defect,
        "morse": None,
        "symmetry": None,
    }
    if rep.converged:
        try:
            mr = morse_index(u, problem.spec, None, problem.op, problem.split.m + 3, seed=cfg["seed"])
            result["morse"] = mr.to_dict()
        except SpectralError as exc:
            result["morse"] = {"error": str(exc)}
        result["symmetry"] = polarization_invariants(u, problem.spec, None, problem.op, e1).to_dict()
    return result, u, rep.converged


def cmd_solve(cfg):
    problem = build_problem(cfg)
    if cfg["require_m_positive"] and problem.split.m == 0:
        raise ConfigError(f"lambda={problem.spec.lam:g} is below lambda_1; m = 0")
    result, u, converged = solve_point(cfg, problem)
    write_field_csv(_out(cfg, "solution.csv"), u)
    write_report(_out(cfg, "solve_report.json"), "solve", cfg, result, problem.grid,
                 notes=NOTES_SYMMETRIC)
    log.info("level c = %.10g (threshold %.6g), converged=%s", result["level_c"],
             result["threshold"], converged)
    return EXIT_OK if converged else EXIT_UNCONVERGED


def cmd_instanton(cfg):
    problem = build_problem(cfg)
    verdict = verify_threshold(problem.spec, problem.split, problem.grid, None, problem.op,
                               eps_grid=cfg["eps_grid"], margin=cfg["margin"])
    path = _out(cfg, "instanton_sweep.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rep in verdict.reports:
            d = rep.to_dict()
            w.writerow([repr(float(d[c])) for c in CSV_COLUMNS])
    reps = verdict.reports
    fits = {}
    notes = []
    if problem.spec.N == 4:
        notes.append("N = 4: slope fits skipped (logarithmic bubble asymptotics).")
    elif len(reps) >= 2:
        S = sobolev_constant(problem.spec.N)
        eps = [r.eps for r in reps]
        fits["mass_exponent"] = loglog_slope(eps, [r.mass for r in reps])
        deficits = [S - r.rayleigh for r in reps]
        fits["deficit_slope"] = loglog_slope(eps, deficits) if all(d > 0 for d in deficits) else None
    result = {
        "lambda": problem.spec.lam,
        "alpha": problem.spec.alpha,
        "m": problem.split.m,
        "verdict": verdict.holds,
        "witness_eps": verdict.witness_eps,
        "margin": verdict.margin,
        "threshold": threshold(problem.spec.N),
        "fits": fits,
        "reports": [r.to_dict() for r in reps],
    }
    write_report(_out(cfg, "instanton_verdict.json"), "instanton", cfg, result, problem.grid,
                 notes=notes)
    if not any(r.projection_ok for r in reps):
        return EXIT_NUMERIC
    return EXIT_OK


def _scan_values(cfg, problem_for_auto):
    start, stop, num = cfg["start"], cfg["stop"], cfg["num"]
    if cfg["param"] == "alpha":
        vals = np.linspace(float(start), float(stop), num)
        if np.any(vals < 0):
            raise ConfigError("alpha must be >= 0")
        return [float(v) for v in vals]
    ev = problem_for_auto.spectrum.eigvals

    def value(text):
        how = parse_lambda(text)
        if how[0] == "abs":
            return how[1]
        if how[2] > len(ev):
            raise ConfigError(f"auto lambda refers to eigenvalue {how[2]} beyond the computed range")
        return how[1] * ev[how[2] - 1]

    return [float(v) for v in np.linspace(value(start), value(stop), num)]


def _scan_worker(args):
    cfg, value = args
    row = {cfg["param"]: value, "m": None, "level_c": None, "threshold": threshold(cfg["dim"]),
           "converged": False, "morse": None, "sign_change": None, "error": ""}
    try:
        if cfg["param"] == "lambda":
            problem = build_problem(cfg, lam_text=repr(value))
        else:
            problem = build_problem(cfg, alpha=value)
        row["m"] = problem.split.m
        result, _, converged = solve_point(cfg, problem)
        row.update(level_c=result["level_c"], converged=converged,
                   sign_change=result["changes_sign"])
        if result["morse"] and "symmetric_class_morse_index" in result["morse"]:
            row["morse"] = result["morse"]["symmetric_class_morse_index"]
    except (NehariError, SpectralError, RuntimeError, ValueError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_scan(cfg):
    base_problem = build_problem(cfg) if cfg["param"] == "lambda" else None
    if base_problem is not None:
        # make sure auto() references further up the spectrum resolve
        for text in (cfg["start"], cfg["stop"]):
            how = parse_lambda(text)
            if how[0] == "auto" and how[2] > len(base_problem.spectrum):
                base_problem = Problem(base_problem.spec, base_problem.grid, base_problem.op,
                                       dirichlet_spectrum(base_problem.op, how[2] + 1),
                                       base_problem.split)
    values = _scan_values(cfg, base_problem)
    if not values:
        raise ConfigError("scan range has no points")
    jobs = [(cfg, v) for v in values]
    if cfg["workers"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
            rows = list(pool.map(_scan_worker, jobs))
    else:
        rows = [_scan_worker(j) for j in jobs]
    cols = [cfg["param"], "m", "level_c", "threshold", "converged", "morse", "sign_change", "error"]
    with open(_out(cfg, "scan.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow(["" if row[c] is None else (repr(row[c]) if isinstance(row[c], float) else row[c])
                        for c in cols])
    return EXIT_OK if any(r["converged"] for r in rows) else EXIT_UNCONVERGED


def cmd_diag(cfg):
    spec0 = ProblemSpec(cfg["dim"], 0.0, cfg["alpha"])
    try:
        u = read_field_csv(cfg["field"], spec0)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read field: {exc}") from None
    cfg = {**cfg, "nr": u.grid.nr, "ntheta": u.grid.ntheta}
    problem = build_problem(cfg)
    from .functional import FunctionalContext
    ctx = FunctionalContext(problem.spec, problem.op)
    x = u.interior()
    g = ctx.gradient(x)
    gnorm = float(np.sqrt(problem.op.h_norm2(g)))
    scale = max(1.0, float(np.sqrt(problem.op.h_norm2(x))))
    e1 = problem.spectrum.eigfield(0)
    result = {
        "lambda": problem.spec.lam,
        "m": problem.split.m,
        "grad_norm": gnorm,
        "is_critical": gnorm <= cfg["tol_g"] * scale,
        "symmetry": polarization_invariants(u, problem.spec, None, problem.op, e1).to_dict(),
        "morse": None,
    }
    if np.any(u.values):
        sc = sign_change(u, None, e1)
        result.update(changes_sign=bool(sc), e1_integral=sc.e1_integral)
    if result["is_critical"]:
        result["morse"] = morse_index(u, problem.spec, None, problem.op, problem.split.m + 3,
                                      seed=cfg["seed"]).to_dict()
    else:
        result["morse_skipped"] = "field is not a critical point within tol_g"
    write_report(_out(cfg, "diag_report.json"), "diag", cfg, result, problem.grid,
                 notes=NOTES_SYMMETRIC)
    return EXIT_OK


COMMANDS = {"eigen": cmd_eigen, "solve": cmd_solve, "instanton": cmd_instanton,
            "scan": cmd_scan, "diag": cmd_diag}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def make_parser():
    parser = _Parser(prog="henon-nehari", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        keys = KEYS[name]
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--dim", type=int, help="space dimension N (>= 3)")
        p.add_argument("--nr", type=int)
        p.add_argument("--ntheta", type=int)
        p.add_argument("-k", "--k-eigs", dest="k_eigs", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        if "lambda" in keys:
            p.add_argument("--lambda", dest="lambda", help="number or auto(c*lk)")
        if "tol_c" in keys:
            p.add_argument("--tol-c", dest="tol_c", type=float)
        if "tol_g" in keys:
            p.add_argument("--tol-g", dest="tol_g", type=float)
            p.add_argument("--max-iter", dest="max_iter", type=int)
            p.add_argument("--seed-policy", dest="seed_policy")
        if name == "eigen":
            p.add_argument("--eigenfields", action="store_const", const=True)
            p.add_argument("--format")
        if name == "solve":
            p.add_argument("--require-m-positive", dest="require_m_positive",
                           action="store_const", const=True)
        if name == "instanton":
            p.add_argument("--eps-grid", dest="eps_grid")
            p.add_argument("--margin", type=float)
        if name == "scan":
            p.add_argument("--param", choices=["lambda", "alpha"])
            p.add_argument("--start")
            p.add_argument("--stop")
            p.add_argument("--num", type=int)
            p.add_argument("--workers", type=int)
        if name == "diag":
            p.add_argument("--field")
    return parser


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.command, args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SpectralError, NehariError, InsufficientSpectrumError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
