"""Command-line entry points: solve, probe, acoustic, bench.

One JSON config file drives each command (``--config``); command-line flags
override individual keys. Every run writes a self-describing report that
embeds the fully resolved config, and a report file is itself accepted as
``--config`` (the embedded config is reused), so runs are reproducible from
their artifacts. Data outputs are deterministic given config+seed; the
timing fields inside reports are not.

Exit codes: 0 ok, 1 numerical failure, 2 io, 3 config.
"""

from __future__ import annotations

import argparse
import csv
import io as _stdio
import json
import os
import sys
import time

import numpy as np

from . import acoustic, core, dichotomy, harness, io as bio, laguerre, models
from .backend import backend_name
from .errors import (
    BandTooWide,
    BlocktriError,
    ConfigError,
    FileFormatError,
    InvalidRankCount,
)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_IO = 2
EXIT_CONFIG = 3

_SCHEMAS = {
    "solve": {
        "matrix": str, "rhs": (str, list), "ranks": int, "tol": float,
        "out": str, "plan_cache": str, "seed": int,
    },
    "probe": {
        "d_list": list, "tol": float, "out": str, "seed": int,
        "model": {
            "nz1": int, "nz2": int, "nr": int, "hz": float, "hr": float,
            "c1": float, "rho1": float, "c2": float, "rho2": float, "eta": float,
        },
    },
    "acoustic": {
        "grid": {"nz": int, "nr": int, "hz": float, "hr": float},
        "medium": {"layers": list, "rho": float, "c": float},
        "pml": {"cells": int, "chi": float, "nu": int, "cp": float},
        "splits": list,
        "source": {"f0": float, "t0": float, "g": float, "r": float, "z": float},
        "laguerre": {"alpha": int, "eta": float, "nterms": int},
        "gauges": list, "snapshot_times": list,
        "times": {"start": float, "stop": float, "count": int},
        "tol": float, "probe_bandwidth": int, "bc_bottom": str,
        "out": str, "seed": int,
    },
    "bench": {
        "p_list": list, "n": int, "m": int, "alpha": float, "beta": float,
        "out": str, "seed": int,
    },
}

_DEFAULTS = {
    "solve": {"ranks": 1, "tol": 1e-8, "out": ".", "seed": 0},
    "probe": {
        "d_list": [0, 3, 5, 11, 21], "tol": 1e-8, "out": ".", "seed": 0,
        "model": {},
    },
    "acoustic": {
        "grid": {"nz": 48, "nr": 64, "hz": 5.0, "hr": 5.0},
        "medium": {"rho": 1.0, "c": 2000.0},
        "pml": {"cells": 24, "chi": 1e-6, "nu": 2},
        "splits": [],
        "source": {"f0": 30.0, "t0": 0.2, "g": 4.0, "r": 0.0, "z": 15.0},
        "laguerre": {"alpha": 5, "eta": 1800.0, "nterms": 320},
        "gauges": [[50.0, 25.0]],
        "snapshot_times": [],
        "times": {"start": 1e-6, "stop": 0.5, "count": 600},
        "tol": 1e-9, "probe_bandwidth": 3, "bc_bottom": "neumann",
        "out": ".", "seed": 0,
    },
    "bench": {
        "p_list": [2, 4, 8, 16], "n": 64, "m": 4,
        "alpha": 1e-6, "beta": 1e-9, "out": ".", "seed": 0,
    },
}


def _validate(section, schema, path):
    if not isinstance(section, dict):
        raise ConfigError(f"{path}: expected an object")
    for key, value in section.items():
        if key not in schema:
            raise ConfigError(f"{path}: unknown key {key!r}")
        want = schema[key]
        if isinstance(want, dict):
            _validate(value, want, f"{path}.{key}")
        elif isinstance(want, tuple):
            if not isinstance(value, want):
                raise ConfigError(f"{path}.{key}: wrong type {type(value).__name__}")
        elif want is float:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{path}.{key}: expected a number")
        elif want is int:
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{path}.{key}: expected an integer")
        elif not isinstance(value, want):
            raise ConfigError(f"{path}.{key}: wrong type {type(value).__name__}")


def _merge(base, override):
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(command, path=None, overrides=None):
    """Defaults <- config file <- flags; unknown keys rejected up front."""
    cfg = json.loads(json.dumps(_DEFAULTS[command]))
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise FileFormatError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if "config" in data and "command" in data:
            if data["command"] != command:
                raise ConfigError(
                    f"report was produced by {data['command']!r}, not {command!r}"
                )
            data = data["config"]
        _validate(data, _SCHEMAS[command], command)
        cfg = _merge(cfg, data)
    if overrides:
        _validate(overrides, _SCHEMAS[command], command)
        cfg = _merge(cfg, overrides)
    return cfg


def _write_report(out_dir, command, cfg, results):
    report = {"command": command, "config": cfg, "results": results}
    bio.atomic_write(
        os.path.join(out_dir, f"{command}_report.json"),
        (json.dumps(report, indent=2, sort_keys=True) + "\n").encode(),
    )
    return report


def _ensure_out(cfg):
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    return out


# -- commands -----------------------------------------------------------------


def cmd_solve(cfg):
    if "matrix" not in cfg or "rhs" not in cfg:
        raise ConfigError("solve needs 'matrix' and 'rhs' paths")
    out = _ensure_out(cfg)
    matrix = bio.read_matrix(cfg["matrix"])
    rhs_paths = cfg["rhs"] if isinstance(cfg["rhs"], list) else [cfg["rhs"]]
    vectors = [bio.read_vector(p) for p in rhs_paths]
    for v in vectors:
        if v.n != matrix.n or v.m != matrix.m:
            raise ConfigError(f"rhs layout ({v.n},{v.m}) != matrix ({matrix.n},{matrix.m})")
    ranks = cfg["ranks"]
    t0 = time.time()
    plan = None
    cache = cfg.get("plan_cache")
    if cache and os.path.exists(cache):
        try:
            plan = bio.read_plan(cache, matrix)
            if plan.ranks != ranks:
                plan = None
        except FileFormatError:
            plan = None
    if plan is None:
        plan = dichotomy.plan_build(matrix, ranks)
        if cache:
            bio.write_plan(cache, plan)
    build_s = time.time() - t0

    t0 = time.time()
    batch = np.stack([v.data for v in vectors], axis=2)
    if ranks >= 2:
        x, trace = harness.harness_solve(plan, batch)
        stages = trace.stages
    else:
        x = dichotomy.plan_solve(plan, batch)
        stages = 0
    solve_s = time.time() - t0

    residuals = []
    sol_paths = []
    for i in range(len(vectors)):
        xi = np.ascontiguousarray(x[:, :, i])
        r = matrix.apply(xi) - vectors[i].data
        denom = np.abs(vectors[i].data).max() or 1.0
        residuals.append(float(np.abs(r).max() / denom))
        sol_path = os.path.join(out, f"solution_{i:03d}.bvc")
        bio.write_vector(sol_path, core.BlockVector(xi))
        sol_paths.append(sol_path)
    worst = max(residuals)
    results = {
        "residual": worst,
        "residuals": residuals,
        "plan_build_seconds": build_s,
        "solve_seconds": solve_s,
        "ranks": ranks,
        "stages": stages,
        "solutions": sol_paths,
        "backend": backend_name(),
    }
    _write_report(out, "solve", cfg, results)
    if worst > cfg["tol"]:
        raise BlocktriError(f"residual {worst:.3e} exceeds tolerance {cfg['tol']:.1e}")
    return results


def cmd_probe(cfg):
    out = _ensure_out(cfg)
    model = models.two_medium_model(**cfg["model"])
    if any(2 * d + 1 > model.system.ngamma for d in cfg["d_list"]):
        raise ConfigError(
            f"interface of {model.system.ngamma} nodes is smaller than 2d+1 "
            f"for d in {cfg['d_list']}"
        )
    sweep = models.probe_sweep(model, cfg["d_list"], tol=cfg["tol"], seed=cfg["seed"])
    rows = []
    for d, iters, seconds, band in sweep:
        bio.write_band(os.path.join(out, f"band_d{d:03d}.band"), band)
        rows.append((d, iters, seconds))
    csv_path = os.path.join(out, "probe_sweep.csv")
    buf = _stdio.StringIO()
    w = csv.writer(buf)
    w.writerow(["d", "iterations", "seconds"])
    for d, iters, seconds in rows:
        w.writerow([d, iters, f"{seconds:.6f}"])
    bio.atomic_write(csv_path, buf.getvalue().encode())
    results = {
        "sweep": [{"d": d, "iterations": i} for d, i, _s in rows],
        "csv": csv_path,
        "interface_size": model.system.ngamma,
    }
    _write_report(out, "probe", cfg, results)
    return results


def _build_acoustic_model(cfg):
    g = cfg["grid"]
    med_cfg = cfg["medium"]
    if "layers" in med_cfg:
        layers = [tuple(l) for l in med_cfg["layers"]]
        med = acoustic.MediumModel.layered(g["nz"], g["nr"], g["hz"], g["hr"], layers)
    else:
        med = acoustic.MediumModel.uniform(
            g["nz"], g["nr"], g["hz"], g["hr"], rho=med_cfg["rho"], c=med_cfg["c"]
        )
    lcfg = cfg["laguerre"]
    lp = laguerre.LaguerreParams(lcfg["alpha"], lcfg["eta"], lcfg["nterms"])
    s = cfg["source"]
    src = laguerre.SourceSpec(s["f0"], s["t0"], s["g"], r=s["r"], z=s["z"])
    pml_cfg = cfg.get("pml")
    pml_params = None
    pml_cells = 0
    if pml_cfg:
        pml_cells = pml_cfg["cells"]
        cp = pml_cfg.get("cp")
        if cp is None:
            cp = float(np.sqrt(med.kappa[-1, 0] / med.rho[-1, 0]))
        pml_params = acoustic.PmlParams(
            width=pml_cells * g["hz"], cp=cp, nu=pml_cfg.get("nu", 2),
            chi=pml_cfg.get("chi", 1e-6), z0=g["nz"] * g["hz"],
        )
    return acoustic.AcousticModel(
        med, lp, src, pml_params=pml_params, pml_cells=pml_cells,
        splits=cfg["splits"], bc_bottom=cfg["bc_bottom"], tol=cfg["tol"],
        probe_bandwidth=cfg["probe_bandwidth"],
    )


def cmd_acoustic(cfg):
    out = _ensure_out(cfg)
    model = _build_acoustic_model(cfg)
    gauges = [tuple(gg) for gg in cfg["gauges"]]
    snap_times = list(cfg["snapshot_times"])
    state = model.run(gauges=gauges, snapshot_times=snap_times)
    tcfg = cfg["times"]
    times = np.linspace(tcfg["start"], tcfg["stop"], tcfg["count"])
    series = model.gauge_series(state, times)
    gauge_csv = os.path.join(out, "gauges.csv")
    buf = _stdio.StringIO()
    w = csv.writer(buf)
    w.writerow(["t"] + [f"r{gr:g}_z{gz:g}" for gr, gz in gauges])
    for i, t in enumerate(times):
        w.writerow([f"{t:.9e}"] + [f"{series[i, j]:.17e}" for j in range(len(gauges))])
    bio.atomic_write(gauge_csv, buf.getvalue().encode())
    snap_paths = []
    for ti, t in enumerate(snap_times):
        path = os.path.join(out, f"snapshot_{ti:03d}.f64")
        bio.write_snapshot(
            path, state.snapshots[ti],
            {
                "nz": model.nz_total, "nr": model.nr,
                "hz": model.hz, "hr": model.hr,
                "t": t, "harmonic_count": state.m,
            },
        )
        snap_paths.append(path)
    results = {
        "harmonics": state.m,
        "gauge_csv": gauge_csv,
        "snapshots": snap_paths,
        "interface_iterations": [s.iterations for s in state.stats[:8]],
    }
    _write_report(out, "acoustic", cfg, results)
    return results


def cmd_bench(cfg):
    out = _ensure_out(cfg)
    rng = np.random.default_rng(cfg["seed"])
    n, m = cfg["n"], cfg["m"]
    rows = []
    for p in cfg["p_list"]:
        if p < 1 or p > n:
            raise InvalidRankCount(f"p={p} outside [1, {n}]")
        mat = core.random_dominant(n, m, rng)
        plan = dichotomy.plan_build(mat, p)
        f = rng.standard_normal((n, m))
        _x, trace = harness.harness_solve(plan, f)
        t1 = t2 = float("nan")
        if p >= 2:
            params = harness.CostModelParams(cfg["alpha"], cfg["beta"], m, p)
            t1 = harness.predict_preprocess_comm(params)
            t2 = harness.predict_solve_comm(params)
        rows.append(
            (p, trace.stages, len(trace.records), trace.total_bytes(), t1, t2)
        )
    csv_path = os.path.join(out, "bench.csv")
    buf = _stdio.StringIO()
    w = csv.writer(buf)
    w.writerow(["p", "stages", "messages", "bytes", "T1_model", "T2_model"])
    for row in rows:
        w.writerow(list(row[:4]) + [f"{row[4]:.12e}", f"{row[5]:.12e}"])
    bio.atomic_write(csv_path, buf.getvalue().encode())
    results = {"csv": csv_path, "rows": [list(r[:4]) for r in rows]}
    _write_report(out, "bench", cfg, results)
    return results


# -- argument parsing ----------------------------------------------------------


def _parser():
    ap = argparse.ArgumentParser(
        prog="blocktri",
        description="block-tridiagonal dichotomy solver, Schur-complement DD, "
        "and Laguerre acoustic demonstrator",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config (or an emitted report)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed for generated data")
        p.add_argument("--tol", type=float, help="solver tolerance")

    ps = sub.add_parser("solve", help="solve BTR1/BVC1 systems via the dichotomy plan")
    common(ps)
    ps.add_argument("--matrix", help="BTR1 matrix file")
    ps.add_argument("--rhs", action="append", help="BVC1 right-hand side (repeatable)")
    ps.add_argument("--ranks", type=int, help="virtual rank count")
    ps.add_argument("--plan-cache", dest="plan_cache", help="DPLN plan cache path")

    pp = sub.add_parser("probe", help="probing-preconditioner bandwidth sweep")
    common(pp)
    pp.add_argument("--d", help="comma-separated bandwidth list, e.g. 0,3,5,11,21")

    pa = sub.add_parser("acoustic", help="desk-scale acoustic demonstrator")
    common(pa)

    pb = sub.add_parser("bench", help="virtual-rank trace and cost-model table")
    common(pb)
    pb.add_argument("--alpha", type=float, help="latency per message [s]")
    pb.add_argument("--beta", type=float, help="transfer time per byte [s]")
    pb.add_argument("--p", help="comma-separated rank counts")

    return ap


def _overrides_from_args(args):
    over = {}
    for key in ("out", "seed", "tol"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    if args.command == "solve":
        if args.matrix is not None:
            over["matrix"] = args.matrix
        if args.rhs:
            over["rhs"] = args.rhs if len(args.rhs) > 1 else args.rhs[0]
        if args.ranks is not None:
            over["ranks"] = args.ranks
        if args.plan_cache is not None:
            over["plan_cache"] = args.plan_cache
    elif args.command == "probe":
        if args.d is not None:
            try:
                over["d_list"] = [int(v) for v in args.d.split(",") if v != ""]
            except ValueError as exc:
                raise ConfigError(f"bad --d list: {args.d!r}") from exc
    elif args.command == "bench":
        if args.alpha is not None:
            over["alpha"] = args.alpha
        if args.beta is not None:
            over["beta"] = args.beta
        if args.p is not None:
            try:
                over["p_list"] = [int(v) for v in args.p.split(",") if v != ""]
            except ValueError as exc:
                raise ConfigError(f"bad --p list: {args.p!r}") from exc
    return over


_COMMANDS = {
    "solve": cmd_solve,
    "probe": cmd_probe,
    "acoustic": cmd_acoustic,
    "bench": cmd_bench,
}


def _fail(category, exc, code):
    sys.stderr.write(
        json.dumps({"error": category, "message": str(exc)}) + "\n"
    )
    return code


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.command, args.config, _overrides_from_args(args))
        _COMMANDS[args.command](cfg)
    except (ConfigError, BandTooWide) as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except (FileNotFoundError, OSError, FileFormatError) as exc:
        return _fail("io", exc, EXIT_IO)
    except BlocktriError as exc:
        return _fail("numerical", exc, EXIT_NUMERICAL)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
