"""Configuration-driven experiment runner.

Usage::

    hohomog {cell,rates,excess,probes,validate-config} --config PATH [--out DIR] [--jobs K] [--seed S]

Config files are INI text.  Sections and keys (defaults in parentheses):

``[experiment]``
    ``kind`` (required: cell, rates, excess, probes), ``preset`` (cosine_1d),
    ``d`` (the preset's natural dimension), ``m`` (2), ``eps`` (comma
    separated, fractions allowed, e.g. ``1/8, 1/16``), ``seed`` (0).
``[preset]``
    Preset parameters, e.g. ``a0``, ``a1``, ``contrast``, ``width``,
    ``skew``, ``c``.  Whitespace- or comma-separated lists become arrays.
``[grid]``
    ``N`` (256, cell resolution), ``nodes_per_eps`` (128), ``cells`` (32,
    torus points per eps-period), ``nodes_per_period`` (256, kernel
    quadrature), ``hom_M`` (8192), ``cache_dir`` (``<out>/cache``).
``[tolerances]``
    ``solver`` (1e-9 cell, 1e-8 torus sweep), ``certificate`` (0.02).
``[rates]``
    ``variants`` (``dirichlet, torus``), ``q`` (4).
``[acceptance]``
    Checks, all optional.  ``A_bar`` with ``A_bar_atol``, ``chi_max_below``;
    ``min_slope.<variant>.<norm>`` and ``min_r2.<variant>.<norm>``;
    ``max_stability`` and ``constant_halving`` (excess); ``max_spread``
    (probes).  The run exits 0 iff every listed check passes.

Exit status: 0 success, 1 acceptance failure, 2 configuration error,
3 solver failure.  Failures print one JSON line on stderr.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import platform
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, cellproblem, coeffs, experiments, kernels, solvers
from .errors import FitError, HomogError, SolverError, ValidationError

KINDS = ("cell", "rates", "excess", "probes")
EXIT_OK, EXIT_ACCEPT, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

RATES_HEADER = ("experiment", "eps", "norm_kind", "error", "slope_group", "certificate")
EXCESS_HEADER = ("eps", "r", "delta", "H_r", "H_delta_r", "I_2r", "h_r", "pass", "certificate")
PROBES_HEADER = ("probe", "eps", "p_or_r", "value", "certificate")
CELL_HEADER = ("alpha", "beta", "i", "j", "A_bar", "certificate")


class ConfigError(HomogError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    preset: coeffs.Preset
    d: int | None
    m: int
    eps: list
    seed: int
    grid: dict
    tolerances: dict
    rates: dict
    acceptance: dict
    raw: dict = field(default_factory=dict)


# -- config -----------------------------------------------------------------------

def _number(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(Fraction(text)) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def _param(text: str):
    parts = text.replace(",", " ").split()
    if len(parts) > 1:
        return np.array([_number(p) for p in parts], dtype=float)
    if text.strip().lower() in ("true", "false"):
        return text.strip().lower() == "true"
    return _number(text)


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    raw = {s: dict(parser[s]) for s in parser.sections()}
    if "experiment" not in raw:
        raise ConfigError("missing [experiment] section")
    exp = raw["experiment"]
    kind = exp.get("kind", "").strip()
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {KINDS}")
    name = exp.get("preset", "cosine_1d").strip()
    if name not in coeffs.PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    params = {k: _param(v) for k, v in raw.get("preset", {}).items()}
    eps = [_number(e) for e in exp.get("eps", "").split(",") if e.strip()]
    if kind != "cell":
        try:
            experiments.check_eps_list(eps)
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc
    m = int(_number(exp.get("m", "2")))
    d = int(_number(exp["d"])) if "d" in exp else None
    if m not in (1, 2) or (d is not None and d not in (1, 2)):
        raise ConfigError("supported orders are m in {1, 2} and dimensions d in {1, 2}")
    grid = {"N": 256, "nodes_per_eps": 128, "cells": 32, "nodes_per_period": 256, "hom_M": 8192}
    grid.update({k: (v if k == "cache_dir" else _number(v)) for k, v in raw.get("grid", {}).items()})
    tols = {"solver": None, "certificate": 0.02}
    tols.update({k: _number(v) for k, v in raw.get("tolerances", {}).items()})
    for k, v in tols.items():
        if v is not None and not v > 0:
            raise ConfigError(f"tolerance {k} must be positive")
    rates_cfg = {"variants": "dirichlet, torus", "q": 4.0}
    rates_cfg.update(raw.get("rates", {}))
    rates_cfg["variants"] = [v.strip() for v in str(rates_cfg["variants"]).split(",") if v.strip()]
    bad = set(rates_cfg["variants"]) - {"dirichlet", "torus"}
    if bad:
        raise ConfigError(f"unknown rates variants {sorted(bad)}")
    rates_cfg["q"] = float(_number(str(rates_cfg["q"])))
    acceptance = {k: _param(v) for k, v in raw.get("acceptance", {}).items()}
    return ExperimentConfig(kind, coeffs.Preset(name, params), d, m, eps, int(_number(exp.get("seed", "0"))),
                            grid, tols, rates_cfg, acceptance, raw)


# -- output -----------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def versions() -> dict:
    import scipy

    return {"hohomog": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "kernels": kernels.BACKEND}


# -- pipelines --------------------------------------------------------------------

@dataclass
class Outcome:
    files: dict                     # name -> bytes
    results: dict
    certificates: list
    checks: dict                    # name -> {value, threshold, pass}
    timings: dict


def _check(checks, name, value, threshold, ok):
    checks[name] = {"value": value, "threshold": threshold, "pass": bool(ok)}


def _corrector_set(cfg: ExperimentConfig, N: int, out: Path, timings: dict):
    A = coeffs.sample(cfg.preset, N, m=cfg.m, d=cfg.d)
    cache_dir = Path(cfg.grid.get("cache_dir") or out / "cache")
    path = cache_dir / f"{cfg.preset.key()}-d{A.d}-m{A.m}-N{N}.h2mc"
    t = time.perf_counter()
    if path.exists():
        cs = cellproblem.load_cache(path)
        source = "cache"
    else:
        cs = cellproblem.solve_all(A, tol=cfg.tolerances["solver"] or cellproblem.DEFAULT_TOL)
        cellproblem.save_cache(path, cs)
        source = "solve"
    timings[f"cell_N{N}_{source}"] = time.perf_counter() - t
    return A, cs


def run_cell(cfg, out, jobs) -> Outcome:
    timings = {}
    A, cs = _corrector_set(cfg, int(cfg.grid["N"]), out, timings)
    tol = cfg.tolerances["solver"] or cellproblem.DEFAULT_TOL
    result, cert = experiments.cell_experiment(A, tol=tol, corrector_set=cs)
    probe_mu = coeffs.coercivity_probe(A, trials=8, seed=cfg.seed)
    result["coercivity_probe"] = float(probe_mu)
    P = len(cs.alphas)
    rows = [(a, b, i, j, cs.A_bar[a, b, i, j], cert.id)
            for a in range(P) for b in range(P) for i in range(A.n) for j in range(A.n)]
    checks = {}
    acc = cfg.acceptance
    if "A_bar" in acc:
        target = np.atleast_1d(np.asarray(acc["A_bar"], dtype=float))
        got = np.asarray(result["A_bar"], dtype=float).ravel()
        atol = float(acc.get("A_bar_atol", 1e-6))
        err = float(np.max(np.abs(got - target))) if target.size in (1, got.size) else np.inf
        _check(checks, "A_bar", err, atol, err <= atol)
    if "chi_max_below" in acc:
        lim = float(acc["chi_max_below"])
        _check(checks, "chi_max", result["chi_max"], lim, result["chi_max"] < lim)
    return Outcome({"cell.csv": csv_bytes(CELL_HEADER, rows)}, result, [cert], checks, timings)


def _scalar_a(cfg):
    if cfg.d not in (None, 1):
        raise ConfigError("interval experiments are one-dimensional")
    return solvers.scalar_coefficient(coeffs.sample(cfg.preset, 64, m=cfg.m, d=1))


def run_rates(cfg, out, jobs) -> Outcome:
    timings, results, rows, certs, reports = {}, {}, [], [], []
    if "dirichlet" in cfg.rates["variants"]:
        A, cs = _corrector_set(cfg, int(cfg.grid["N"]), out, timings)
        t = time.perf_counter()
        res = experiments.dirichlet_rates(
            solvers.scalar_coefficient(A), cs, cfg.eps, rtol=cfg.tolerances["certificate"],
            nodes_per_eps=int(cfg.grid["nodes_per_eps"]), hom_M=int(cfg.grid["hom_M"]),
            q=cfg.rates["q"], jobs=jobs)
        timings["dirichlet"] = time.perf_counter() - t
        reports += res.reports
        certs += res.certificates
    if "torus" in cfg.rates["variants"]:
        N_cell = int(cfg.grid["cells"])
        A, cs = _corrector_set(cfg, N_cell, out, timings)
        t = time.perf_counter()
        res = experiments.torus_rates(A, cs, cfg.eps, cells=N_cell, tol=cfg.tolerances["solver"] or 1e-8,
                                      rtol=cfg.tolerances["certificate"], jobs=jobs)
        timings["torus"] = time.perf_counter() - t
        reports += res.reports
        certs += res.certificates
    checks = {}
    for rep in reports:
        group = f"{rep.experiment}.{rep.norm_kind}"
        for eps, err, cid in rep.rows:
            rows.append((rep.experiment, eps, rep.norm_kind, err, group, cid))
        results[group] = {"slope": rep.fit.slope, "intercept": rep.fit.intercept, "r2": rep.fit.r2}
        for key, attr in (("min_slope", "slope"), ("min_r2", "r2")):
            lim = cfg.acceptance.get(f"{key}.{group}")
            if lim is not None:
                v = getattr(rep.fit, attr)
                _check(checks, f"{key}.{group}", v, float(lim), v >= float(lim))
    _check(checks, "certificates", sum(c.ok for c in certs), len(certs), all(c.ok for c in certs))
    return Outcome({"rates.csv": csv_bytes(RATES_HEADER, rows)}, results, certs, checks, timings)


def run_excess(cfg, out, jobs) -> Outcome:
    t = time.perf_counter()
    res = experiments.excess_experiment(_scalar_a(cfg), cfg.m, cfg.eps,
                                        nodes_per_period=int(cfg.grid["nodes_per_period"]), jobs=jobs)
    timings = {"excess": time.perf_counter() - t}
    rows = []
    passed = iter(res.passed)
    for row in res.rows:
        rows.append((row["eps"], row["r"], row["delta"], row["H_r"], row["H_delta_r"], row["I_2r"],
                     row["h_r"], next(passed), row["solution"]))
    for row in res.constant_rows:
        rows.append((0.0, row["r"], row["delta"], row["H_r"], row["H_delta_r"], row["I_2r"],
                     row["h_r"], row["pass"], row["solution"]))
    results = {"C_hat": res.C_hat, "C_by_eps": {repr(k): v for k, v in res.C_by_eps.items()},
               "stability": res.stability}
    checks = {}
    _check(checks, "rows_pass_with_C_hat", sum(res.passed), len(res.passed), all(res.passed))
    if "max_stability" in cfg.acceptance:
        lim = float(cfg.acceptance["max_stability"])
        _check(checks, "stability", res.stability, lim, res.stability <= lim)
    if cfg.acceptance.get("constant_halving", False):
        ok = [r["pass"] for r in res.constant_rows]
        _check(checks, "constant_halving", sum(ok), len(ok), all(ok))
    _check(checks, "certificates", sum(c.ok for c in res.certificates), len(res.certificates),
           all(c.ok for c in res.certificates))
    return Outcome({"excess.csv": csv_bytes(EXCESS_HEADER, rows)}, results, res.certificates, checks, timings)


def run_probes(cfg, out, jobs) -> Outcome:
    t = time.perf_counter()
    res = experiments.probe_experiment(_scalar_a(cfg), cfg.m, cfg.eps,
                                       nodes_per_period=int(cfg.grid["nodes_per_period"]), jobs=jobs)
    timings = {"probes": time.perf_counter() - t}
    results = {"lipschitz_spread": {k: res.spread(v) for k, v in res.lipschitz.items()},
               "reverse_holder_spread": {f"{k[0]}:p={k[1]:g}": res.spread(v) for k, v in res.reverse_holder.items()}}
    checks = {}
    if "max_spread" in cfg.acceptance:
        lim = float(cfg.acceptance["max_spread"])
        worst = max([*results["lipschitz_spread"].values(), *results["reverse_holder_spread"].values()])
        _check(checks, "spread", worst, lim, worst <= lim)
    _check(checks, "certificates", sum(c.ok for c in res.certificates), len(res.certificates),
           all(c.ok for c in res.certificates))
    return Outcome({"probes.csv": csv_bytes(PROBES_HEADER, res.rows)}, results, res.certificates, checks, timings)


RUNNERS = {"cell": run_cell, "rates": run_rates, "excess": run_excess, "probes": run_probes}


def run(cfg: ExperimentConfig, out, jobs: int = 1) -> int:
    """Execute the pipeline, write CSVs and manifest.json under ``out``; returns the exit status."""
    out = Path(out)
    t0 = time.perf_counter()
    outcome = RUNNERS[cfg.kind](cfg, out, jobs)
    for name, data in outcome.files.items():
        cellproblem.atomic_write(out / name, data)
    ok = all(c["pass"] for c in outcome.checks.values())
    manifest = {
        "kind": cfg.kind,
        "config": cfg.raw,
        "seed": cfg.seed,
        "versions": versions(),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "wall_times": {**outcome.timings, "total": time.perf_counter() - t0},
        "certificates": [c.as_dict() for c in outcome.certificates],
        "results": outcome.results,
        "acceptance": outcome.checks,
        "status": EXIT_OK if ok else EXIT_ACCEPT,
        "files": sorted(outcome.files),
    }
    cellproblem.atomic_write(out / "manifest.json",
                             (json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n").encode())
    if not ok:
        failed = sorted(k for k, c in outcome.checks.items() if not c["pass"])
        _fail(EXIT_ACCEPT, "acceptance", f"failed checks: {', '.join(failed)}")
    return EXIT_OK if ok else EXIT_ACCEPT


def _fail(status: int, kind: str, reason: str) -> int:
    print(json.dumps({"status": status, "error": kind, "reason": reason}), file=sys.stderr)
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hohomog", description="Periodic homogenization experiments.")
    p.add_argument("command", choices=(*KINDS, "validate-config"))
    p.add_argument("--config", required=True, help="INI experiment configuration")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="concurrent solves")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.seed is not None:
            cfg.seed = args.seed
        if args.command == "validate-config":
            print(json.dumps({"status": 0, "kind": cfg.kind}))
            return EXIT_OK
        if args.command != cfg.kind:
            raise ConfigError(f"config kind {cfg.kind!r} does not match subcommand {args.command!r}")
    except (ConfigError, ValidationError) as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    try:
        return run(cfg, args.out, args.jobs)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except (SolverError, FitError) as exc:
        return _fail(EXIT_SOLVER, "solver", str(exc))
    except ValidationError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))


if __name__ == "__main__":
    sys.exit(main())
