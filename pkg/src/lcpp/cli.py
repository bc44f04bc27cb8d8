"""Command-line entry point: ``solve``, ``project``, ``kkt``, ``generate`` and ``bench``.

Exit status is 0 on success, 1 on configuration or solver errors (including
bad command lines) and 2 on I/O or file-format errors.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import itertools
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import LcppConfig, run
from .data_io import (SCHEMA_VERSION, SyntheticSpec, generate, load_dataset, load_solution, save_csv, save_libsvm,
                      save_solution, save_trace)
from .exceptions import ConfigurationError, DataFormatError, LcppError
from .kkt import kkt_report
from .objective import make_objective
from .penalty import make_penalty
from .projection import ProjectionProblem, optimality_residuals, project
from .subsolver import InnerConfig

log = logging.getLogger("lcpp")

EXIT_OK, EXIT_SOLVER, EXIT_IO = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; 2 is reserved for I/O here
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


# ------------------------------------------------------------------ arguments
def parse_level(text: str, d: int) -> float:
    """``"25"`` or ``"0.05d"`` (multiplied by the feature dimension)."""
    s = str(text).strip()
    try:
        if s.endswith("d"):
            return float(s[:-1]) * d
        return float(s)
    except ValueError:
        raise ConfigurationError(f"cannot read level {text!r}; use a number or a multiple of d such as 0.05d") from None


def _gamma_arg(text):
    return text if text == "theory" else float(text)


def _add_problem_args(p, need_eta=True):
    p.add_argument("--data", required=True, help="dataset (libsvm text, or dense CSV by .csv suffix)")
    p.add_argument("--dim", type=int, default=None, help="feature count override for libsvm input")
    p.add_argument("--loss", choices=("logistic", "squared"), default="logistic")
    p.add_argument("--penalty", default="mcp", help="mcp, scad, exp, log, lp-frac or lp-neg (default: mcp)")
    p.add_argument("--lambda", dest="lam", type=float, default=2.0, help="l1 weight for mcp/scad/exp (default: 2)")
    p.add_argument("--theta", type=float, default=0.25, help="shape parameter (default: 0.25)")
    p.add_argument("--p", type=float, default=None, help="exponent for lp-neg")
    p.add_argument("--eps", type=float, default=None, help="offset for lp-frac")
    if need_eta:
        p.add_argument("--eta", required=True, help="target level; a trailing d multiplies by the dimension")


def _add_solver_args(p):
    p.add_argument("--eta0", default=None, help="initial level: number, auto-scad or auto-mcp (default: eta/2)")
    p.add_argument("--gamma", type=_gamma_arg, default=1e-4, help="proximal weight or 'theory' (default: 1e-4)")
    p.add_argument("--outer-iters", type=int, default=1000, help="outer iterations K (default: 1000)")
    p.add_argument("--outer-tol", type=float, default=None, help="early-exit tolerance on the relative step")
    p.add_argument("--deltas", default=None, help="comma-separated level increments (custom schedule)")
    p.add_argument("--inner", choices=("bb", "acsa", "sgd"), default="bb", help="inner solver (default: bb)")
    p.add_argument("--inner-iters", type=int, default=10, help="inner iteration cap for bb/sgd (default: 10)")
    p.add_argument("--inner-tol", type=float, default=1e-5, help="inner relative-change tolerance (default: 1e-5)")
    p.add_argument("--acsa-iters", type=int, default=None, help="fixed AC-SA iteration count (default: derived)")
    p.add_argument("--batch", type=int, default=None, help="minibatch size (default: full gradient)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=1, help="independent seeds; the KKT summary averages over them")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lcpp", description="Level-constrained proximal point solver for sparsity-constrained problems.")
    ap.add_argument("--version", action="version", version=f"lcpp {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run the outer loop on a dataset")
    _add_problem_args(p)
    _add_solver_args(p)
    p.add_argument("--trace", default=None, help="write the per-iteration trace CSV here")
    p.add_argument("--json-report", default=None, help="write the full JSON report here")
    p.add_argument("--solution", default=None, help="write the last iterate as a solution file")

    p = sub.add_parser("project", help="project v onto ||x||_1 + <u, x> <= tau")
    p.add_argument("--input", required=True, help="JSON {v, u, tau} or text: v on line 1, u on line 2, tau on line 3")

    p = sub.add_parser("kkt", help="evaluate KKT residuals of a saved solution")
    _add_problem_args(p)
    p.add_argument("--solution", required=True, help="solution file or JSON report")
    p.add_argument("--dual", type=float, default=None, help="multiplier (default: taken from the file, else 0)")

    p = sub.add_parser("generate", help="write a synthetic sparse dataset")
    p.add_argument("--out", required=True, help="output path (.csv for dense CSV, libsvm otherwise)")
    p.add_argument("--truth", default=None, help="write the ground-truth vector as a solution file")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--d", type=int, default=500)
    p.add_argument("--k-true", type=int, default=20)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--design", choices=("gaussian", "ar"), default="gaussian")
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--task", choices=("classification", "regression"), default="classification")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("bench", help="sweep settings and write one trace per setting")
    _add_problem_args(p)
    _add_solver_args(p)
    p.add_argument("--sweep", action="append", default=[], help="key=v1,v2,... (repeatable), e.g. eta=0.01d,0.05d")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    return ap


# ------------------------------------------------------------------- helpers
def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _penalty(args):
    return make_penalty(args.penalty, lam=args.lam, theta=args.theta, p=args.p, eps=args.eps)


def _config(args, d: int, seed: int) -> LcppConfig:
    eta = parse_level(args.eta, d)
    eta0 = args.eta0
    if eta0 is not None and eta0 not in ("auto-scad", "auto-mcp"):
        eta0 = parse_level(eta0, d)
    deltas = None
    if args.deltas:
        try:
            deltas = [float(t) for t in args.deltas.split(",")]
        except ValueError:
            raise ConfigurationError(f"cannot read level increments {args.deltas!r}") from None
    inner = InnerConfig(solver=args.inner, max_iters=args.inner_iters, tol=args.inner_tol,
                        batch_size=args.batch, seed=seed, acsa_iters=args.acsa_iters)
    return LcppConfig(eta=eta, eta0=eta0, gamma=args.gamma, outer_iters=args.outer_iters,
                      schedule="custom" if deltas else "theory", deltas=deltas, inner=inner,
                      outer_tol=args.outer_tol, seed=seed)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    return v


def _solve_once(args, data, obj, pen, seed):
    cfg = _config(args, data.d, seed)
    t0 = time.perf_counter()
    res = run(cfg, obj, pen)
    return cfg, res, time.perf_counter() - t0


def _manifest(args, cfg, pen, obj, data_path, command):
    return {
        "command": command,
        "version": __version__,
        "input": {"path": str(data_path), "sha256": _sha256(data_path)},
        "loss": args.loss,
        "penalty": pen.describe(),
        "objective": obj.describe(),
        "eta": cfg.eta,
        "eta0": cfg.eta0,
        "gamma": cfg.gamma,
        "outer_iters": cfg.outer_iters,
        "outer_tol": cfg.outer_tol,
        "schedule": cfg.schedule,
        "deltas": list(cfg.deltas) if cfg.deltas else None,
        "inner": {
            "solver": cfg.inner.solver, "max_iters": cfg.inner.max_iters, "tol": cfg.inner.tol,
            "batch_size": cfg.inner.batch_size, "acsa_iters": cfg.inner.acsa_iters,
        },
        "seed": args.seed,
        "repeats": args.repeats,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _report(args, cfg, pen, obj, runs, data_path, command="solve"):
    cfg0, res, elapsed = runs[0]
    kkts = [r.kkt for _, r, _ in runs]
    doc = {
        "schema": SCHEMA_VERSION,
        "manifest": _manifest(args, cfg0, pen, obj, data_path, command),
        "summary": {
            "iterations": res.iterations,
            "stopped_early": res.stopped_early,
            "eta0": res.eta0,
            "gamma": res.gamma,
            "pick_index": res.pick_index,
            "psi_last": obj.value(res.x_last),
            "nnz_last": int(np.count_nonzero(res.x_last)),
            "elapsed_s": elapsed,
        },
        "kkt": res.kkt.as_dict(),
        "kkt_last": res.kkt_last.as_dict(),
        "kkt_mean": {
            "repeats": len(runs),
            "stat_resid": float(np.mean([k.stat_resid for k in kkts])),
            "stat_resid_sq": float(np.mean([k.stat_resid ** 2 for k in kkts])),
            "cs_resid": float(np.mean([k.cs_resid for k in kkts])),
            "feas_gap": float(np.mean([k.feas_gap for k in kkts])),
        },
        "solution": {"x": res.x_last.tolist(), "x_pick": res.x_pick.tolist(),
                     "dual": res.trace[-1].dual_est if res.trace else 0.0},
        "trace": [r.as_dict() for r in res.trace],
    }
    return _jsonable(doc)


# ---------------------------------------------------------------- subcommands
def cmd_solve(args) -> int:
    data = load_dataset(args.data, dim=args.dim)
    obj = make_objective(args.loss, data)
    pen = _penalty(args)
    if args.repeats < 1:
        raise ConfigurationError("--repeats must be at least 1")
    runs = [_solve_once(args, data, obj, pen, args.seed + r) for r in range(args.repeats)]
    cfg, res, elapsed = runs[0]
    if args.trace:
        save_trace(args.trace, res.trace)
    if args.solution:
        save_solution(args.solution, res.x_last, meta={"dual": res.trace[-1].dual_est if res.trace else 0.0})
    doc = _report(args, cfg, pen, obj, runs, args.data)
    if args.json_report:
        with open(args.json_report, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
    k = res.kkt
    print(f"iterations {res.iterations}  psi {doc['summary']['psi_last']:.6g}  g {k.g:.6g} <= eta {cfg.eta:.6g}  "
          f"nnz {doc['summary']['nnz_last']}  stat {k.stat_resid:.3e}  cs {k.cs_resid:.3e}  "
          f"time {elapsed:.2f}s")
    if args.repeats > 1:
        m = doc["kkt_mean"]
        print(f"mean over {args.repeats} seeds: stat {m['stat_resid']:.3e}  cs {m['cs_resid']:.3e}")
    return EXIT_OK


def _read_projection_input(path):
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
            return ProjectionProblem(doc["v"], doc["u"], doc["tau"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataFormatError(f"{path}: expected JSON object with v, u, tau ({exc})") from None
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) != 3:
        raise DataFormatError(f"{path}: expected three non-empty lines (v, u, tau), found {len(lines)}")
    try:
        v = [float(t) for t in lines[0].split()]
        u = [float(t) for t in lines[1].split()]
        tau = float(lines[2])
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    return ProjectionProblem(v, u, tau)


def cmd_project(args) -> int:
    prob = _read_projection_input(args.input)
    res = project(prob)
    out = {"x": res.x.tolist(), "y": res.y, "active": res.active, "residuals": optimality_residuals(prob, res)}
    print(json.dumps(_jsonable(out), indent=1))
    return EXIT_OK


def cmd_kkt(args) -> int:
    data = load_dataset(args.data, dim=args.dim)
    obj = make_objective(args.loss, data)
    pen = _penalty(args)
    x, meta = load_solution(args.solution)
    if x.shape != (data.d,):
        raise ConfigurationError(f"solution has {x.size} entries, dataset has {data.d} features")
    y = args.dual
    if y is None:
        y = float(meta.get("dual", 0.0)) if isinstance(meta, dict) else 0.0
    rep = kkt_report(obj, pen, x, y, parse_level(args.eta, data.d))
    print(json.dumps(_jsonable(rep.as_dict()), indent=1, sort_keys=True))
    return EXIT_OK


def cmd_generate(args) -> int:
    spec = SyntheticSpec(n=args.n, d=args.d, k_true=args.k_true, noise_sigma=args.noise, design=args.design,
                         rho=args.rho, task=args.task, seed=args.seed)
    data, x_true = generate(spec)
    if Path(args.out).suffix.lower() == ".csv":
        save_csv(args.out, data)
    else:
        save_libsvm(args.out, data)
    if args.truth:
        save_solution(args.truth, x_true, meta={"generator": _jsonable(spec.__dict__)})
    print(f"wrote {data.n} x {data.d} {args.task} dataset to {args.out}")
    return EXIT_OK


_SWEEP_KEYS = {
    "eta": str, "eta0": str, "gamma": _gamma_arg, "lambda": float, "lam": float, "theta": float, "p": float,
    "eps": float, "penalty": str, "inner": str, "inner_iters": int, "inner_tol": float, "batch": int,
    "seed": int, "outer_iters": int, "acsa_iters": int, "loss": str,
}


def _parse_sweeps(items):
    axes = []
    for item in items:
        key, sep, vals = item.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not vals:
            raise ConfigurationError(f"sweep {item!r} must look like key=v1,v2")
        if key not in _SWEEP_KEYS:
            raise ConfigurationError(f"cannot sweep {key!r}; choose from {', '.join(sorted(_SWEEP_KEYS))}")
        conv = _SWEEP_KEYS[key]
        try:
            values = [conv(v.strip()) for v in vals.split(",") if v.strip()]
        except ValueError:
            raise ConfigurationError(f"bad value in sweep {item!r}") from None
        axes.append(("lam" if key == "lambda" else key, values))
    return axes


def _bench_point(payload):
    args, label, trace_path = payload
    data = load_dataset(args.data, dim=args.dim)
    obj = make_objective(args.loss, data)
    pen = _penalty(args)
    cfg, res, elapsed = _solve_once(args, data, obj, pen, args.seed)
    save_trace(trace_path, res.trace)
    return {
        "setting": label, "trace": str(trace_path), "iterations": res.iterations,
        "psi": obj.value(res.x_last), "g": res.kkt_last.g, "eta": cfg.eta,
        "nnz": int(np.count_nonzero(res.x_last)), "stat_resid": res.kkt.stat_resid,
        "cs_resid": res.kkt.cs_resid, "elapsed_s": elapsed,
    }


def cmd_bench(args) -> int:
    axes = _parse_sweeps(args.sweep)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = [k for k, _ in axes]
    payloads = []
    for combo in itertools.product(*[v for _, v in axes]) if axes else [()]:
        a = copy.copy(args)
        for k, v in zip(names, combo):
            setattr(a, k, v)
        label = ",".join(f"{k}={v}" for k, v in zip(names, combo)) or "base"
        safe = "".join(c if c.isalnum() or c in "=.-_" else "_" for c in label)
        payloads.append((a, label, out_dir / f"trace_{safe}.csv"))
    if args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_bench_point, payloads))
    else:
        rows = [_bench_point(p) for p in payloads]
    summary = out_dir / "summary.csv"
    with open(summary, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"{r['setting']}: psi {r['psi']:.6g}  nnz {r['nnz']}  stat {r['stat_resid']:.3e}  {r['elapsed_s']:.2f}s")
    print(f"wrote {len(rows)} traces and {summary}")
    return EXIT_OK


_COMMANDS = {"solve": cmd_solve, "project": cmd_project, "kkt": cmd_kkt, "generate": cmd_generate, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_SOLVER
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (DataFormatError, OSError) as exc:
        print(f"lcpp: {exc}", file=sys.stderr)
        return EXIT_IO
    except LcppError as exc:
        print(f"lcpp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
