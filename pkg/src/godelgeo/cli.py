"""Batch front end: ``godelgeo <command> --config run.json [flags]``.

Config file (JSON)::

    {
      "seed": 0,
      "spacetime": {"family": "godel", "params": {"omega": 0.7071067811865476}},
      "command": {"name": "shoot", "x0": [0, 0], "v0": [1, 0], "ydot0": 0, "tdot0": 1, "s_max": 10},
      "output": {"dir": "out"}
    }

Exit codes: 0 success (checkers report their verdict in the JSON),
2 invalid configuration, 3 degenerate L, 4 connect did not converge.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

import numpy as np

from .connect import SolverConfig, minimize_action
from .errors import DegenerateL, ExprDomainError, ExprSyntaxError, LorentzViolation
from .hypotheses import (
    GrowthWitness,
    Region,
    check_c2,
    check_h2,
    check_h3,
    check_h3prime,
    check_negative_L,
    check_quadratic_growth,
    check_s2,
    theorem_verdicts,
)
from .pathspace import ELL_FLOOR, BoundaryData
from .shoot import InitialData, completeness_probe, integrate_geodesic
from .spacetime import ZOO, SpacetimeSpec, coefficients, instantiate_builtin, sample_coefficients, spectral

COMMANDS = ("describe", "connect", "shoot", "probe", "check", "sweep")
CHECKS = ("verdicts", "growth", "h2", "h3", "h3prime", "s2", "c2", "L_negative")

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_NONCONVERGED = 0, 2, 3, 4


class ConfigError(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON with every float at 17 significant digits; non-finite floats become null."""

    def enc(o, level):
        pad, inner = " " * (indent * level), " " * (indent * (level + 1))
        if isinstance(o, float):
            return fmt_float(o) if math.isfinite(o) else "null"
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{inner}{json.dumps(k)}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + pad + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list)) for v in o):
                return "[" + ", ".join(enc(v, level + 1) for v in o) + "]"
            return "[\n" + ",\n".join(inner + enc(v, level + 1) for v in o) + "\n" + pad + "]"
        return json.dumps(o)

    return enc(_plain(obj), 0) + "\n"


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# --------------------------------------------------------------------------
# Config access
# --------------------------------------------------------------------------


def _block(cfg: dict, key: str) -> dict:
    b = cfg.get(key, {})
    if not isinstance(b, dict):
        raise ConfigError(key, "must be an object")
    return b


def _num(block: dict, key: str, prefix: str, default=None, *, positive=False, integer=False):
    if key not in block:
        if default is None:
            raise ConfigError(f"{prefix}.{key}", "is required")
        return default
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{prefix}.{key}", f"must be a finite number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{prefix}.{key}", f"must be an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{prefix}.{key}", f"must be positive, got {v!r}")
    return int(v) if integer else float(v)


def _vec(block: dict, key: str, prefix: str, dim: int, default=None) -> np.ndarray:
    if key not in block:
        if default is None:
            raise ConfigError(f"{prefix}.{key}", "is required")
        return np.asarray(default, dtype=float)
    return _as_vec(block[key], f"{prefix}.{key}", dim)


def _as_vec(v, key: str, dim: int) -> np.ndarray:
    try:
        arr = np.asarray(v, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ConfigError(key, f"must be a list of numbers, got {v!r}") from None
    if arr.shape != (dim,) or not np.isfinite(arr).all():
        raise ConfigError(key, f"must be {dim} finite numbers, got {v!r}")
    return arr


def build_spacetime(cfg: dict) -> SpacetimeSpec:
    block = _block(cfg, "spacetime")
    family = block.get("family")
    if family not in ZOO:
        raise ConfigError("spacetime.family", f"must be one of {', '.join(ZOO)}, got {family!r}")
    params = block.get("params")
    if params is None:
        params = {k: v for k, v in block.items() if k not in ("family", "probe_points")}
        where = "spacetime"
    else:
        where = "spacetime.params"
    if not isinstance(params, dict):
        raise ConfigError(where, "must be an object")
    try:
        spec = instantiate_builtin(family, params)
    except (ValueError, TypeError, ExprSyntaxError) as exc:
        raise ConfigError(where, str(exc)) from None
    pts = block.get("probe_points", [])
    for i, p in enumerate(pts):
        x = _as_vec(p, f"spacetime.probe_points[{i}]", spec.dim)
        _lorentz(spec, x, f"spacetime.probe_points[{i}]")
    return spec


def _lorentz(spec, x, key):
    try:
        coefficients(spec, x[None, :], gradients=False)
    except LorentzViolation as exc:
        raise ConfigError(key, f"H = {exc.H!r} <= 0 at this point") from None
    except ExprDomainError as exc:
        raise ConfigError(key, str(exc)) from None


def _witness(block: dict, key: str, prefix: str, dim: int, center) -> GrowthWitness:
    w = block.get(key)
    if not isinstance(w, dict):
        raise ConfigError(f"{prefix}.{key}", "is required (object with lambda, k, x0)")
    p = f"{prefix}.{key}"
    lam = _num(w, "lambda", p)
    if lam < 0:
        raise ConfigError(f"{p}.lambda", "must be >= 0")
    return GrowthWitness(lam, _num(w, "k", p), _vec(w, "x0", p, dim, center))


def _region(block: dict, prefix: str, dim: int, seed: int) -> Region:
    r = block.get("region", {})
    if not isinstance(r, dict):
        raise ConfigError(f"{prefix}.region", "must be an object")
    p = f"{prefix}.region"
    kw = {"center": _vec(r, "center", p, dim, np.zeros(dim)), "seed": int(r.get("seed", seed))}
    if "radii" in r:
        kw["radii"] = tuple(r["radii"])
    if "samples_per_shell" in r:
        kw["samples_per_shell"] = _num(r, "samples_per_shell", p, integer=True, positive=True)
    try:
        return Region(**kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(p, str(exc)) from None


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


class Run:
    """One resolved invocation: config, command parameters, output directory."""

    def __init__(self, cfg: dict, command: str, out_dir: Path, seed: int, segments=None, smax=None):
        self.cfg = cfg
        self.command = command
        self.out = out_dir
        self.seed = seed
        self.segments = segments
        self.smax = smax
        self.params = _block(cfg, "command")
        self.prefix = "command"

    def write_json(self, name: str, obj) -> Path:
        path = self.out / name
        atomic_write(path, dumps(obj))
        return path

    def write_csv(self, name: str, header, rows) -> Path:
        path = self.out / name
        atomic_write(path, csv_text(header, rows))
        return path


def _cmd_describe(run: Run, spec: SpacetimeSpec) -> tuple[int, dict]:
    if "points" in run.params:
        pts, where = run.params["points"], "command.points"
    else:
        pts, where = _block(run.cfg, "spacetime").get("probe_points", []), "spacetime.probe_points"
    table = []
    for i, p in enumerate(pts):
        x = _as_vec(p, f"{where}[{i}]", spec.dim)
        _lorentz(spec, x, f"{where}[{i}]")
        s = sample_coefficients(spec, x)
        sp = spectral(s)
        table.append({
            "x": x.tolist(), "A": s.A, "B": s.B, "C": s.C, "H": s.H,
            "Lambda_plus": sp.lambda_plus, "Lambda_minus": sp.lambda_minus, "mu": sp.mu,
        })
    out = {"command": "describe", "spacetime": spec.describe(), "points": table}
    run.write_json("describe.json", out)
    return EXIT_OK, {}


def _solver_config(run: Run) -> SolverConfig:
    p, pre = run.params, run.prefix
    N = run.segments if run.segments is not None else _num(p, "segments", pre, 64, integer=True, positive=True)
    try:
        return SolverConfig(
            N=N,
            max_iters=_num(p, "max_iters", pre, 2000, integer=True, positive=True),
            grad_tol=_num(p, "grad_tol", pre, 1e-8, positive=True),
            restarts=_num(p, "restarts", pre, 4, integer=True, positive=True),
            ell_floor=_num(p, "ell_floor", pre, ELL_FLOOR, positive=True),
            seed=run.seed,
        )
    except ValueError as exc:
        raise ConfigError(pre, str(exc)) from None


def _cmd_connect(run: Run, spec: SpacetimeSpec) -> tuple[int, dict]:
    p, pre, d = run.params, run.prefix, spec.dim
    x_p, x_q = _vec(p, "x_p", pre, d), _vec(p, "x_q", pre, d)
    _lorentz(spec, x_p, f"{pre}.x_p")
    _lorentz(spec, x_q, f"{pre}.x_q")
    y_p, t_p = _num(p, "y_p", pre, 0.0), _num(p, "t_p", pre, 0.0)
    y_q, t_q = _num(p, "y_q", pre), _num(p, "t_q", pre)
    cfg = _solver_config(run)
    sol = minimize_action(spec, x_p, x_q, BoundaryData.from_endpoints(y_p, t_p, y_q, t_q), cfg, y_p=y_p, t_p=t_p)
    diag = {"command": "connect", "spacetime": spec.describe(), **sol.diagnostics()}
    run.write_json("connect.json", diag)
    summary = {"J": sol.action_J, "residual": sol.residual, "status": sol.status}
    if sol.status in ("degenerate", "invalid"):
        return (EXIT_DEGENERATE if sol.status == "degenerate" else EXIT_CONFIG), summary
    header = ["s"] + [f"x{i + 1}" for i in range(d)] + ["y", "t"]
    run.write_csv("connect.csv", header, np.column_stack([sol.path.s, sol.curve()]).tolist())
    return (EXIT_OK if sol.converged else EXIT_NONCONVERGED), summary


def _initial(run: Run, spec: SpacetimeSpec):
    p, pre, d = run.params, run.prefix, spec.dim
    x0 = _vec(p, "x0", pre, d)
    _lorentz(spec, x0, f"{pre}.x0")
    init = InitialData(
        x0, _vec(p, "v0", pre, d), _num(p, "ydot0", pre), _num(p, "tdot0", pre),
        _num(p, "y0", pre, 0.0), _num(p, "t0", pre, 0.0),
    )
    s_max = run.smax if run.smax is not None else _num(p, "s_max", pre, positive=True)
    if not s_max > 0:
        raise ConfigError("--smax", "must be positive")
    kw = {"tol": _num(p, "tol", pre, 1e-10, positive=True)}
    if "step" in p:
        kw["step"] = _num(p, "step", pre, positive=True)
    return init, s_max, kw


def _trajectory_csv(run: Run, name: str, spec, traj) -> None:
    d = spec.dim
    header = ["s"] + [f"x{i + 1}" for i in range(d)] + ["y", "t", "ydot", "tdot", "c1_drift", "c2_drift", "Ez_drift"]
    cols = np.column_stack([
        traj.s, traj.x, traj.y, traj.t, traj.ydot, traj.tdot, traj.c1_drift, traj.c2_drift, traj.Ez_drift,
    ])
    run.write_csv(name, header, cols.tolist())


def _cmd_shoot(run: Run, spec: SpacetimeSpec) -> tuple[int, dict]:
    init, s_max, kw = _initial(run, spec)
    traj = integrate_geodesic(spec, init, s_max, **kw)
    _trajectory_csv(run, "shoot.csv", spec, traj)
    run.write_json("shoot.json", {"command": "shoot", "spacetime": spec.describe(), **traj.drift_report()})
    return EXIT_OK, {"drift": traj.drift, "terminated": traj.terminated}


def _cmd_probe(run: Run, spec: SpacetimeSpec) -> tuple[int, dict]:
    init, s_max, kw = _initial(run, spec)
    w = _witness(run.params, "witness", run.prefix, spec.dim, np.zeros(spec.dim))
    report, traj = completeness_probe(spec, init, (w.lam, w.k, w.x0), s_max, **kw)
    _trajectory_csv(run, "probe.csv", spec, traj)
    run.write_json("probe.json", {
        "command": "probe", "spacetime": spec.describe(), "witness": w.to_dict(), **report.to_dict(),
    })
    return EXIT_OK, {"verdict": report.verdict}


def _cmd_check(run: Run, spec: SpacetimeSpec) -> tuple[int, dict]:
    p, pre, d = run.params, run.prefix, spec.dim
    cond = p.get("condition", "verdicts")
    if cond not in CHECKS:
        raise ConfigError(f"{pre}.condition", f"must be one of {', '.join(CHECKS)}, got {cond!r}")
    region = _region(p, pre, d, run.seed)
    center = region.center
    try:
        if cond == "verdicts":
            ws = None
            if "witness" in p:
                ws = _witness(p, "witness", pre, d, center)
            elif "witnesses" in p:
                block = p["witnesses"]
                ws = {k: _witness(block, k, f"{pre}.witnesses", d, center) for k in block}
            out = theorem_verdicts(spec, region, ws)
            verdict = out["connectedness"]["passing_routes"]
            result = {"command": "check", "condition": cond, **out}
        else:
            if cond == "h2":
                rep = check_h2(spec, region)
            elif cond == "L_negative":
                rep = check_negative_L(spec, region)
            elif cond == "s2":
                rep = check_s2(spec, region, _witness(p, "witness_beta", pre, d, center),
                               _witness(p, "witness_delta", pre, d, center))
            else:
                w = _witness(p, "witness", pre, d, center)
                if cond == "growth":
                    fld = p.get("field", "C")
                    target = {"A": spec.A, "B": spec.B, "C": spec.C}.get(fld, fld)
                    rep = check_quadratic_growth(target, region, w, power=_num(p, "power", pre, 2.0),
                                                 condition="growth")
                elif cond == "h3":
                    rep = check_h3(spec, region, w)
                elif cond == "h3prime":
                    rep = check_h3prime(spec, region, w)
                else:
                    rep = check_c2(spec, region, w)
            verdict = rep.verdict
            result = {"command": "check", "spacetime": spec.describe(), "region": region.to_dict(), **rep.to_dict()}
    except (ExprSyntaxError, ExprDomainError, LorentzViolation, ValueError) as exc:
        raise ConfigError(pre, str(exc)) from None
    run.write_json("check.json", result)
    return EXIT_OK, {"verdict": verdict}


HANDLERS = {
    "describe": _cmd_describe,
    "connect": _cmd_connect,
    "shoot": _cmd_shoot,
    "probe": _cmd_probe,
    "check": _cmd_check,
}


def execute(cfg: dict, command: str, out_dir: Path, seed: int, segments=None, smax=None) -> tuple[int, dict]:
    """Run one non-sweep command. Returns (exit code, summary fields)."""
    run = Run(cfg, command, out_dir, seed, segments, smax)
    spec = build_spacetime(cfg)
    return HANDLERS[command](run, spec)


# --------------------------------------------------------------------------
# Sweeps
# --------------------------------------------------------------------------


def set_dotted(cfg: dict, path: str, value) -> None:
    keys = path.split(".")
    node = cfg
    for k in keys[:-1]:
        nxt = node.get(k)
        if nxt is None:
            nxt = node[k] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(path, f"'{k}' is not an object")
        node = nxt
    node[keys[-1]] = value


def sweep_cells(grid: dict) -> list[dict]:
    """Cartesian product in the key order given; empty if any axis is empty."""
    if not grid:
        return []
    keys = list(grid)
    for k in keys:
        if not isinstance(grid[k], list):
            raise ConfigError(f"command.grid.{k}", "must be a list of values")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _run_cell(args) -> dict:
    base_cfg, inner, assignment, out_dir, seed, segments, smax = args
    cfg = copy.deepcopy(base_cfg)
    row = {"status": EXIT_OK, "J": None, "residual": None, "verdict": None, "message": ""}
    try:
        for path, value in assignment.items():
            set_dotted(cfg, path, value)
        code, summary = execute(cfg, inner, Path(out_dir), seed, segments, smax)
        row["status"] = code
        for key in ("J", "residual"):
            row[key] = summary.get(key)
        v = summary.get("verdict", summary.get("status", summary.get("terminated")))
        row["verdict"] = ";".join(v) if isinstance(v, list) else v
    except ConfigError as exc:
        row["status"], row["message"] = EXIT_CONFIG, str(exc)
    except DegenerateL as exc:
        row["status"], row["message"] = EXIT_DEGENERATE, str(exc)
    except Exception as exc:  # a failing cell must not abort the sweep
        row["status"], row["message"] = 1, f"{type(exc).__name__}: {exc}"
    return row


def _cmd_sweep(cfg: dict, out_dir: Path, seed: int, jobs: int, segments, smax) -> int:
    p = _block(cfg, "command")
    inner = p.get("base")
    if inner not in HANDLERS:
        raise ConfigError("command.base", f"must be one of {', '.join(HANDLERS)}, got {inner!r}")
    grid = p.get("grid", {})
    if not isinstance(grid, dict):
        raise ConfigError("command.grid", "must be an object mapping dotted keys to value lists")
    cells = sweep_cells(grid)
    base_cfg = copy.deepcopy(cfg)
    base_cfg["command"] = {k: v for k, v in p.items() if k not in ("base", "grid")}
    base_cfg["command"]["name"] = inner
    tasks = [
        (base_cfg, inner, a, str(out_dir / f"cell_{i:04d}"), seed, segments, smax)
        for i, a in enumerate(cells)
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, tasks))
    else:
        rows = [_run_cell(t) for t in tasks]
    keys = list(grid)
    header = ["cell"] + keys + ["status", "J", "residual", "verdict", "message"]
    lines = []
    for i, (a, r) in enumerate(zip(cells, rows)):
        vals = [json.dumps(_plain(a[k])) if not isinstance(a[k], (int, float)) else a[k] for k in keys]
        lines.append([i] + vals + [r["status"], "" if r["J"] is None else float(r["J"]),
                                   "" if r["residual"] is None else float(r["residual"]),
                                   "" if r["verdict"] is None else r["verdict"], r["message"]])
    atomic_write(out_dir / "summary.csv", csv_text(header, lines))
    return EXIT_OK


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="godelgeo", description="Geodesics in Gödel-type spacetimes.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path, help="JSON run configuration")
        sp.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
        sp.add_argument("--jobs", type=int, default=1, help="parallel sweep cells")
        sp.add_argument("--seed", type=int, help="seed for restarts and sampling (overrides seed)")
        sp.add_argument("--segments", type=int, help="path segments N for connect")
        sp.add_argument("--smax", type=float, help="integration length for shoot/probe")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                        help="override a dotted config key, e.g. command.s_max=5")
    return ap


def load_config(path: Path, overrides: list[str]) -> dict:
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("--config", "top level must be an object")
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError("--set", f"expected KEY=JSON, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        set_dotted(cfg, key, value)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        block = _block(cfg, "command")
        named = block.get("name")
        if named is not None and named != args.command:
            raise ConfigError("command.name", f"config is for {named!r} but {args.command!r} was requested")
        out = args.out
        if out is None:
            o = _block(cfg, "output").get("dir", "out")
            if not isinstance(o, str):
                raise ConfigError("output.dir", "must be a path string")
            out = Path(o)
            if not out.is_absolute():
                out = args.config.resolve().parent / out
        out = out.resolve()
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError("seed", f"must be an integer, got {seed!r}")
        if args.jobs < 1:
            raise ConfigError("--jobs", "must be >= 1")
        if args.segments is not None and args.segments < 2:
            raise ConfigError("--segments", "must be >= 2")
        if args.command == "sweep":
            return _cmd_sweep(cfg, out, seed, args.jobs, args.segments, args.smax)
        code, _ = execute(cfg, args.command, out, seed, args.segments, args.smax)
        return code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateL as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
