"""Config-driven runner for single runs and seeded replication batches.

Usage::

    fbfsplit run config.yaml [--seeds 0:200] [--jobs 4] [--out DIR] [--dump-iterates]
    fbfsplit --check

Exit codes: 0 success, 1 invalid configuration, 2 divergence guard
triggered, 3 acceptance check failure (``--check``).

The config is YAML. See ``README.md`` for the full schema; a minimal
inclusion problem reads::

    problem:
      type: inclusion
      dim: 2
      A: l1
      B: skew_rotation
    solver:
      max_iters: 500
    seeds: [0]
    x0: [1.0, 0.0]
    reference: [0.0, 0.0]
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from . import diagnostics
from .composite import (Block, CompositeProblem, ConvexBlock, ConvexProblem, beta_bound,
                        solve_convex, solve_primal_dual, solve_variational_inequality)
from .exceptions import ConfigError, DivergenceError
from .fbf import FBFConfig, run
from .operators import certify_monotone_lipschitz, make_forward, make_function, make_resolvent
from .space import MetricSequence
from .stochastic import KINDS, NoiseSchedule

__all__ = ["RunConfig", "parse_config", "run_batch", "run_seed", "main"]

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_CHECK_FAILED = 0, 1, 2, 3
PROBLEM_TYPES = ("inclusion", "composite", "convex", "vi")
SOLVER_KEYS = {"epsilon", "gamma", "max_iters", "stop_tol", "metric"}
TOP_KEYS = {"problem", "solver", "noise", "seeds", "reference", "x0", "v0", "tol", "output"}


@dataclass
class RunConfig:
    """Validated run description; ``text`` is kept so workers can rebuild it."""

    problem_type: str
    problem: object
    beta: float
    solver: dict
    noise: tuple | None
    metric_seq: MetricSequence | None
    seeds: list
    x0: np.ndarray
    v0: list | None = None
    reference: np.ndarray | None = None
    tol: float = 1e-6
    output: str = "fbf_out"
    text: str = field(default="", repr=False)

    def fbf_config(self, seed):
        return FBFConfig(epsilon=self.solver.get("epsilon"), gamma=self.solver.get("gamma"),
                         max_iters=self.solver["max_iters"], stop_tol=self.solver["stop_tol"],
                         noise=self.noise, metric_seq=self.metric_seq, seed=seed)


class _Errors:
    def __init__(self):
        self.items = []

    def add(self, path, msg):
        self.items.append((path, msg))

    def guard(self, path, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except KeyError as exc:
            self.add(path, exc.args[0] if exc.args else str(exc))
        except (ValueError, TypeError) as exc:
            self.add(path, str(exc))
        return None


def _op_spec(spec):
    if isinstance(spec, str):
        return spec, {}
    if isinstance(spec, dict) and "name" in spec:
        params = spec.get("params") or {}
        if not isinstance(params, dict):
            raise TypeError("params must be a mapping")
        return spec["name"], params
    raise TypeError("operator must be a registry name or a mapping with 'name' and 'params'")


def _build(err, path, factory, spec, dim):
    if spec is None:
        err.add(path, "missing")
        return None
    parsed = err.guard(path, _op_spec, spec)
    if parsed is None:
        return None
    name, params = parsed
    return err.guard(path, factory, name, dim, **params)


def _vector(err, path, value, dim):
    try:
        v = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        err.add(path, "must be a list of numbers")
        return None
    if v.ndim != 1 or (dim is not None and v.size != dim):
        err.add(path, f"expected a vector of length {dim}, got shape {v.shape}")
        return None
    if not np.all(np.isfinite(v)):
        err.add(path, "entries must be finite")
        return None
    return v


def _dim(err, path, value):
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        err.add(path, "must be a positive integer")
        return None
    return value


def _matrix(err, path, value, cols):
    try:
        M = np.array(value, dtype=float, ndmin=2)
    except (TypeError, ValueError):
        err.add(path, "must be a row-major list of rows")
        return None
    if M.ndim != 2 or (cols is not None and M.shape[1] != cols):
        err.add(path, f"expected {cols} columns, got shape {M.shape}")
        return None
    return M


def _parse_inclusion(err, spec):
    dim = _dim(err, "problem.dim", spec.get("dim"))
    if dim is None:
        return None, None
    A = _build(err, "problem.A", make_resolvent, spec.get("A"), dim)
    B = _build(err, "problem.B", make_forward, spec.get("B"), dim)
    if A is None or B is None:
        return None, None
    beta = spec.get("beta", B.beta)
    if not isinstance(beta, (int, float)) or isinstance(beta, bool) or beta < 0:
        err.add("problem.beta", "must be a nonnegative number")
        return None, None
    beta = float(beta)
    if beta != B.beta:
        rep = certify_monotone_lipschitz(replace(B, beta=beta), samples=32, rng_seed=0)
        if not rep.passed:
            err.add("problem.beta", f"{B.name} is not {beta:.6g}-Lipschitz monotone "
                                    f"(worst margin {rep.worst_margin:.3e})")
            return None, None
    return (A, B), beta


def _parse_vi(err, spec):
    dim = _dim(err, "problem.dim", spec.get("dim"))
    if dim is None:
        return None, None
    f = _build(err, "problem.f", make_function, spec.get("f"), dim)
    B = _build(err, "problem.B", make_forward, spec.get("B"), dim)
    if f is None or B is None:
        return None, None
    return (f, B), float(B.beta)


def _parse_blocks(err, spec, dim, convex):
    blocks = spec.get("blocks")
    if not isinstance(blocks, list) or not blocks:
        err.add("problem.blocks", "need a nonempty list of blocks")
        return None
    out = []
    for i, b in enumerate(blocks):
        path = f"problem.blocks[{i}]"
        if not isinstance(b, dict):
            err.add(path, "must be a mapping")
            continue
        L = _matrix(err, f"{path}.L", b.get("L"), dim)
        if L is None:
            continue
        g = L.shape[0]
        r = _vector(err, f"{path}.r", b.get("r", [0.0] * g), g)
        if convex:
            fn = _build(err, f"{path}.g", make_function, b.get("g"), g)
            lstar = b.get("lstar_grad")
            grad = None if lstar is None else _build(err, f"{path}.lstar_grad", make_forward,
                                                     lstar, g)
            if r is not None and fn is not None and (lstar is None or grad is not None):
                out.append(ConvexBlock(r=r, g=fn, L=L, lstar_grad=grad))
        else:
            B = _build(err, f"{path}.B", make_resolvent, b.get("B"), g)
            Dinv = _build(err, f"{path}.Dinv", make_forward, b.get("Dinv", "zero"), g)
            if r is not None and B is not None and Dinv is not None:
                blk = err.guard(path, Block, r=r, B=B, Dinv=Dinv, L=L)
                if blk is not None:
                    out.append(blk)
    return out if len(out) == len(blocks) else None


def _parse_composite(err, spec):
    dim = _dim(err, "problem.dim", spec.get("dim"))
    if dim is None:
        return None, None
    z = _vector(err, "problem.z", spec.get("z", [0.0] * dim), dim)
    A = _build(err, "problem.A", make_resolvent, spec.get("A"), dim)
    C = _build(err, "problem.C", make_forward, spec.get("C", "zero"), dim)
    blocks = _parse_blocks(err, spec, dim, convex=False)
    if any(v is None for v in (z, A, C, blocks)):
        return None, None
    p = err.guard("problem", CompositeProblem, z=z, A=A, C=C, blocks=blocks)
    return (p, beta_bound(p)) if p is not None else (None, None)


def _parse_convex(err, spec):
    dim = _dim(err, "problem.dim", spec.get("dim"))
    if dim is None:
        return None, None
    z = _vector(err, "problem.z", spec.get("z", [0.0] * dim), dim)
    f = _build(err, "problem.f", make_function, spec.get("f"), dim)
    h = _build(err, "problem.h", make_forward, spec.get("h", "zero"), dim)
    h_value = None
    if h is not None:
        name, params = _op_spec(spec.get("h", "zero"))
        try:
            h_value = make_function(name, dim, **params)
        except KeyError:
            h_value = None
    blocks = _parse_blocks(err, spec, dim, convex=True)
    if any(v is None for v in (z, f, h, blocks)):
        return None, None
    p = ConvexProblem(z=z, f=f, h_grad=h, blocks=blocks, h_value=h_value)
    cp = err.guard("problem", p.to_composite)
    return (p, beta_bound(cp)) if cp is not None else (None, None)


def _parse_noise(err, spec, dim):
    if spec is None:
        return None
    if not isinstance(spec, dict):
        err.add("noise", "must be a mapping with keys a, b, c (or all)")
        return None
    slots = {k: spec.get(k, spec.get("all")) for k in ("a", "b", "c")}
    out = []
    for k, s in slots.items():
        path = f"noise.{k}"
        if s is None:
            out.append(NoiseSchedule.zero(dim))
            continue
        if not isinstance(s, dict):
            err.add(path, "must be a mapping")
            continue
        kind = s.get("kind", "zero")
        if kind not in KINDS:
            err.add(f"{path}.kind", f"unknown noise kind {kind!r}; expected one of {KINDS}")
            continue
        sch = err.guard(path, NoiseSchedule, kind, dim, float(s.get("sigma", 0.0)),
                        float(s.get("rho", 0.5)))
        if sch is not None:
            if kind != "zero" and not sch.rho < 1:
                err.add(f"{path}.rho", "must be < 1 for summable errors")
            out.append(sch)
    return tuple(out) if len(out) == 3 else None


def _parse_metric(err, spec, dim):
    if spec is None:
        return None
    if not isinstance(spec, dict) or spec.get("kind") not in ("constant", "geometric"):
        err.add("solver.metric.kind", "must be 'constant' or 'geometric'")
        return None
    diag = _vector(err, "solver.metric.diag", spec.get("diag"), dim)
    if diag is None:
        return None
    if spec["kind"] == "constant":
        return err.guard("solver.metric", lambda: MetricSequence.geometric(diag, c=0.0))
    return err.guard("solver.metric", MetricSequence.geometric, diag,
                     float(spec.get("c", 1.0)), float(spec.get("rho", 0.5)))


def _parse_seeds(err, value):
    if isinstance(value, str) and ":" in value:
        lo, _, hi = value.partition(":")
        try:
            value = list(range(int(lo), int(hi)))
        except ValueError:
            err.add("seeds", "range must read 'start:stop'")
            return None
    if isinstance(value, int) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list) or not value:
        err.add("seeds", "need a nonempty list of seeds")
        return None
    if not all(isinstance(s, int) and 0 <= s < 2 ** 64 for s in value):
        err.add("seeds", "seeds must be 64-bit unsigned integers")
        return None
    if len(set(value)) != len(value):
        err.add("seeds", "seeds must be distinct")
        return None
    return value


def parse_config(text, seeds=None):
    """Parse and validate a YAML run config.

    Every problem found is collected; :class:`ConfigError` lists them all
    with their paths into the config.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([("", f"not valid YAML: {exc}")]) from None
    if not isinstance(raw, dict):
        raise ConfigError([("", "config must be a mapping")])
    err = _Errors()
    for k in sorted(set(raw) - TOP_KEYS):
        err.add(k, "unknown key")

    pspec = raw.get("problem")
    ptype = pspec.get("type") if isinstance(pspec, dict) else None
    problem, beta, dim = None, None, None
    if not isinstance(pspec, dict):
        err.add("problem", "missing or not a mapping")
    elif ptype not in PROBLEM_TYPES:
        err.add("problem.type", f"must be one of {PROBLEM_TYPES}, got {ptype!r}")
    else:
        parser = {"inclusion": _parse_inclusion, "vi": _parse_vi,
                  "composite": _parse_composite, "convex": _parse_convex}[ptype]
        problem, beta = parser(err, pspec)
        dim = pspec.get("dim") if isinstance(pspec.get("dim"), int) else None

    solver = raw.get("solver") or {}
    if not isinstance(solver, dict):
        err.add("solver", "must be a mapping")
        solver = {}
    for k in sorted(set(solver) - SOLVER_KEYS):
        err.add(f"solver.{k}", "unknown key")
    solver = dict(solver)
    solver.setdefault("max_iters", 1000)
    solver.setdefault("stop_tol", 0.0)
    if not isinstance(solver["max_iters"], int) or solver["max_iters"] < 1:
        err.add("solver.max_iters", "must be a positive integer")
    if not isinstance(solver["stop_tol"], (int, float)) or solver["stop_tol"] < 0:
        err.add("solver.stop_tol", "must be a nonnegative number")

    # product-space problems iterate on the packed vector
    kdim = dim
    if ptype in ("composite", "convex") and problem is not None:
        kdim = sum(problem.to_composite().dims if ptype == "convex" else problem.dims)
    metric = None
    if solver.get("metric") is not None:
        if ptype in ("composite", "convex"):
            err.add("solver.metric", "variable metrics are supported for inclusion and vi only")
        elif dim is not None:
            metric = _parse_metric(err, solver["metric"], dim)
    noise = _parse_noise(err, raw.get("noise"), kdim) if kdim is not None else None

    if beta is not None:
        mu = 1.0 if metric is None else float(metric.mu)
        try:
            cfg = FBFConfig(epsilon=solver.get("epsilon"), gamma=solver.get("gamma"),
                            metric_seq=metric)
            rule = cfg.step_rule(beta)
            if not callable(cfg.gamma):
                n_check = len(cfg.gamma) if isinstance(cfg.gamma, list) else 1
                for n in range(n_check):
                    rule(n)
        except (ValueError, TypeError) as exc:
            bound = 1.0 / (beta * mu + 1.0)
            path = "solver.gamma" if "gamma" in str(exc) else "solver.epsilon"
            err.add(path, f"{exc} (beta={beta:.6g}, mu={mu:.6g}, 1/(beta*mu+1)={bound:.6g})")

    seed_list = _parse_seeds(err, seeds if seeds is not None else raw.get("seeds", [0]))
    x0 = _vector(err, "x0", raw.get("x0"), dim) if raw.get("x0") is not None else (
        np.zeros(dim) if dim else None)
    reference = None
    if raw.get("reference") is not None:
        reference = _vector(err, "reference", raw["reference"], kdim)
    v0 = raw.get("v0")
    if v0 is not None and ptype in ("composite", "convex") and problem is not None:
        blocks = problem.blocks
        if not isinstance(v0, list) or len(v0) != len(blocks):
            err.add("v0", f"need one vector per block ({len(blocks)})")
            v0 = None
        else:
            L_rows = [np.array(b.L, ndmin=2).shape[0] for b in blocks]
            v0 = [_vector(err, f"v0[{i}]", v, g) for i, (v, g) in enumerate(zip(v0, L_rows))]
    tol = raw.get("tol", 1e-6)
    if not isinstance(tol, (int, float)) or tol <= 0:
        err.add("tol", "must be a positive number")

    if err.items:
        raise ConfigError(err.items)
    return RunConfig(problem_type=ptype, problem=problem, beta=beta, solver=solver,
                     noise=noise, metric_seq=metric, seeds=seed_list, x0=x0, v0=v0,
                     reference=reference, tol=float(tol),
                     output=str(raw.get("output", "fbf_out")), text=text)


def _solve(cfg, seed):
    fc = cfg.fbf_config(seed)
    t = cfg.problem_type
    if t == "inclusion":
        A, B = cfg.problem
        return run(A, B, cfg.beta, fc, cfg.x0, cfg.reference)
    if t == "vi":
        f, B = cfg.problem
        return solve_variational_inequality(f, B, fc, cfg.x0, cfg.reference)[0]
    if t == "composite":
        return solve_primal_dual(cfg.problem, fc, cfg.x0, cfg.v0, cfg.reference)[0]
    return solve_convex(cfg.problem, fc, cfg.x0, cfg.v0, cfg.reference)[0]


def _diagnose(trace):
    reps = {"summability": diagnostics.summability_report(trace)}
    if trace.reference is not None:
        reps["quasi_fejer"] = diagnostics.quasi_fejer_check(trace)
        if not trace.noisy and len(trace) >= 1:
            reps["robbins_siegmund"] = diagnostics.robbins_siegmund_check(
                diagnostics.fbf_supermartingale(trace))
    return reps


def run_seed(cfg, seed, dump_iterates=False):
    """Run one replication; returns ``(record, reports, trace_csv, iterates_csv)``."""
    try:
        trace = _solve(cfg, seed)
        status = trace.status
    except DivergenceError as exc:
        trace, status = exc.trace, "diverged"
    reps = _diagnose(trace) if status != "diverged" else {}
    final_res = float(trace.res_primal[-1]) if len(trace) else 0.0
    record = {"seed": seed, "status": status, "iterations": len(trace),
              "final_residual": final_res}
    if trace.dist_ref is not None:
        d = float(trace.dist_ref[-1])
        record["final_distance"] = d
        record["converged"] = bool(status != "diverged" and d <= cfg.tol)
    else:
        record["converged"] = bool(status != "diverged" and final_res <= cfg.tol)
    reports = {k: r.to_dict() for k, r in reps.items()}
    iterates = trace.iterates_csv() if dump_iterates else None
    return record, reports, trace.to_csv(), iterates


def _worker(args):
    text, seed, dump = args
    return run_seed(parse_config(text, seeds=[seed]), seed, dump)


def _dump_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def run_batch(cfg, out=None, jobs=1, dump_iterates=False):
    """Run every seed of ``cfg`` and write traces, summary and diagnostics.

    Files (in ``out`` or ``cfg.output``): ``trace_seed<seed>.csv`` per
    seed, optional ``iterates_seed<seed>.csv``, ``summary.json`` and
    ``diagnostics.json``. Outputs depend only on the config and seeds, so
    repeated runs are byte-identical regardless of ``jobs``.
    """
    out = cfg.output if out is None else out
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out!r}: {exc}") from exc
    if jobs > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_worker, [(cfg.text, s, dump_iterates) for s in cfg.seeds]))
    else:
        results = [run_seed(cfg, s, dump_iterates) for s in cfg.seeds]

    records, diag = [], {}
    check_names = sorted({k for _, reps, _, _ in results for k in reps})
    for (record, reps, trace_csv, it_csv), seed in zip(results, cfg.seeds):
        _write(os.path.join(out, f"trace_seed{seed}.csv"), trace_csv)
        if it_csv is not None:
            _write(os.path.join(out, f"iterates_seed{seed}.csv"), it_csv)
        records.append(record)
        diag[str(seed)] = reps

    n = len(records)
    rates = {c: sum(bool(d.get(c, {}).get("pass")) for d in diag.values()) / n
             for c in check_names}
    summary = {
        "problem_type": cfg.problem_type,
        "seeds": n,
        "tol": cfg.tol,
        "beta": cfg.beta,
        "per_seed": records,
        "convergence_fraction": sum(r["converged"] for r in records) / n,
        "diverged": sum(r["status"] == "diverged" for r in records),
        "diagnostics_pass_rate": rates,
    }
    _write(os.path.join(out, "summary.json"), _dump_json(summary))
    _write(os.path.join(out, "diagnostics.json"), _dump_json(diag))
    return summary


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path!r}: {exc}") from exc


def _seeds_arg(text):
    if ":" in text:
        return text
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("seeds must be 'a,b,c' or 'start:stop'") from None


def build_parser():
    ap = argparse.ArgumentParser(prog="fbfsplit",
                                 description="Stochastic forward-backward-forward splitting runner")
    ap.add_argument("--check", action="store_true",
                    help="run the built-in acceptance problems and exit")
    sub = ap.add_subparsers(dest="command")
    r = sub.add_parser("run", help="run a config file")
    r.add_argument("config", help="YAML run config")
    r.add_argument("--seeds", type=_seeds_arg, help="override seeds: 'a,b,c' or 'start:stop'")
    r.add_argument("--jobs", type=int, default=1, help="parallel replications")
    r.add_argument("--out", help="output directory (overrides config 'output')")
    r.add_argument("--dump-iterates", action="store_true", help="also write x_n per seed")
    r.add_argument("--check", action="store_true", help=argparse.SUPPRESS)
    return ap


def _check():
    from .acceptance import run_all

    ok = True
    for number, title, rep in run_all():
        ok &= bool(rep.passed)
        print(f"[{'PASS' if rep.passed else 'FAIL'}] {number:2d}. {title}: "
              f"worst_margin={rep.worst_margin:.3e}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.check:
        return _check()
    if args.command != "run":
        build_parser().print_usage(sys.stderr)
        return EXIT_INVALID
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read {args.config!r}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = parse_config(text, seeds=args.seeds)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    summary = run_batch(cfg, out=args.out, jobs=args.jobs, dump_iterates=args.dump_iterates)
    out = args.out or cfg.output
    print(f"{summary['seeds']} seed(s); convergence fraction "
          f"{summary['convergence_fraction']:.4f}; outputs in {out}")
    if summary["diverged"]:
        print(f"error: divergence guard triggered for {summary['diverged']} seed(s)",
              file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
