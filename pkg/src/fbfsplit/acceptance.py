"""Built-in acceptance problems and checks (``fbfsplit --check``).

Each check returns a :class:`Report`; :func:`run_all` runs them in order.
The problems are small planar instances whose solutions are known from
their inclusions, for example ``0 in d|.|_1(0) + S 0`` for any skew ``S``.
"""

from __future__ import annotations

import os
import tempfile
import time

import numpy as np

from . import diagnostics as dg
from .cli import parse_config, run_batch
from .composite import (Block, CompositeProblem, ConvexBlock, ConvexProblem, run_lifted,
                        solve_convex, solve_primal_dual, solve_variational_inequality, vi_gap)
from .fbf import FBFConfig, fbf_step, fbf_step_metric, run
from .operators import affine_forward, make_forward, make_function, make_resolvent
from .report import Report
from .space import Metric, MetricSequence
from .stochastic import NoiseSchedule

__all__ = ["PROBLEMS", "run_all", "random_composite_problem", "CHECKS"]

ORIGIN = np.zeros(2)


def _skew():
    return make_forward("skew_rotation", 2)


def _noise(dim, sigma=0.1, rho=0.9):
    g = NoiseSchedule.gaussian(dim, sigma, rho)
    return (g, g, g)


def _inclusion(a_name, x0, gamma=None, metric=None):
    def solve(noise=None, seed=0, max_iters=1000):
        cfg = FBFConfig(gamma=gamma, max_iters=max_iters, noise=noise, seed=seed,
                        metric_seq=metric)
        return run(make_resolvent(a_name, 2), _skew(), None, cfg, x0, ORIGIN)
    return solve


def convex_toy():
    """``minimize 2|x| + 1/2 (x - 1)^2`` written as ``|x| + |x| + h``."""
    return ConvexProblem(z=[0.0], f=make_function("l1", 1),
                         h_grad=make_forward("quadratic", 1, center=1.0),
                         blocks=[ConvexBlock(r=[0.0], g=make_function("l1", 1), L=[[1.0]])],
                         h_value=make_function("quadratic", 1, center=1.0))


def _convex(noise=None, seed=0, max_iters=1000):
    # dual solutions form {v : v in [0, 1]}; (0, 1/2) is one zero of the lifted sum
    cfg = FBFConfig(max_iters=max_iters, noise=noise, seed=seed)
    return solve_convex(convex_toy(), cfg, [1.0], [[0.0]], reference=[0.0, 0.5])[0]


def _vi(noise=None, seed=0, max_iters=1000):
    cfg = FBFConfig(gamma=0.5, max_iters=max_iters, noise=noise, seed=seed)
    return solve_variational_inequality(make_function("box_projection", 2), _skew(), cfg,
                                        [1.0, 0.0], ORIGIN)[0]


PROBLEMS = {
    "rotation_l1": (_inclusion("l1", [1.0, 0.0]), 2),
    "rotation_box": (_inclusion("box_projection", [1.0, 0.0], gamma=0.5), 2),
    "rotation_elastic_net": (_inclusion("elastic_net", [10.0, 0.0]), 2),
    "rotation_l1_metric": (_inclusion("l1", [1.0, 0.0],
                                      metric=MetricSequence.geometric([1.0, 2.0])), 2),
    "convex_toy": (_convex, 2),
    "vi_box": (_vi, 2),
}


def _first_below(trace, tol):
    hit = np.nonzero(trace.dist_ref <= tol)[0]
    return int(hit[0]) if hit.size else None


def check_deterministic():
    t0 = time.perf_counter()
    tr = PROBLEMS["rotation_l1"][0](max_iters=500)
    elapsed = time.perf_counter() - t0
    hit = _first_below(tr, 1e-6)
    ok = hit is not None and elapsed < 1.0
    return Report("deterministic_convergence", ok, 1e-6 - float(np.min(tr.dist_ref)),
                  details={"first_hit": hit, "seconds": elapsed})


def check_single_step():
    A = make_resolvent("zero", 2)
    x_next = fbf_step(A, _skew(), np.array([1.0, 0.0]), 0.5)[0]
    err = float(np.max(np.abs(x_next - [0.75, 0.5])))
    return Report("single_step", err <= 1e-14, 1e-14 - err, details={"x_next": x_next})


def check_stochastic(seeds=200, max_iters=10_000, tol=1e-3):
    t0 = time.perf_counter()
    A, B = make_resolvent("l1", 2), _skew()
    hits = 0
    for s in range(seeds):
        cfg = FBFConfig(max_iters=max_iters, stop_tol=1e-12, noise=_noise(2), seed=s)
        tr = run(A, B, None, cfg, [1.0, 0.0], ORIGIN)
        hits += tr.dist_ref[-1] <= tol
    elapsed = time.perf_counter() - t0
    frac = hits / seeds
    return Report("stochastic_convergence", frac >= 0.95 and elapsed < 60.0, frac - 0.95,
                  details={"fraction": frac, "seconds": elapsed})


def check_summability():
    reps = {}
    for name, (solve, dim) in PROBLEMS.items():
        reps[name] = dg.summability_report(solve(noise=_noise(dim), seed=7, max_iters=2000))
    worst = min(r.worst_margin for r in reps.values())
    return Report("summability", all(reps.values()), worst,
                  details={k: r.details for k, r in reps.items()})


def check_quasi_fejer():
    reps = {name: dg.quasi_fejer_check(solve(max_iters=500))
            for name, (solve, _) in PROBLEMS.items()}
    worst = min(r.worst_margin for r in reps.values())
    return Report("quasi_fejer", all(reps.values()), worst,
                  details={k: r.worst_margin for k, r in reps.items()})


def check_robbins_siegmund():
    reps = {name: dg.robbins_siegmund_check(dg.fbf_supermartingale(solve(max_iters=500)))
            for name, (solve, _) in PROBLEMS.items()}
    worst = min(r.worst_margin for r in reps.values())
    return Report("robbins_siegmund", all(reps.values()), worst,
                  details={k: r.worst_margin for k, r in reps.items()})


def random_composite_problem(rng):
    """Small random instance of the composite inclusion with library operators."""
    d = int(rng.integers(1, 4))

    def resolvent(dim):
        kind = rng.choice(["l1", "box_projection", "elastic_net", "quadratic", "zero",
                           "scaled_identity"])
        if kind == "quadratic":
            return make_resolvent(kind, dim, center=rng.normal(size=dim))
        if kind == "scaled_identity":
            return make_resolvent(kind, dim, lam=float(rng.uniform(0.5, 2.0)))
        return make_resolvent(str(kind), dim)

    def forward(dim):
        kind = rng.choice(["zero", "scaled_identity", "affine"])
        if kind == "affine":
            G = rng.normal(size=(dim, dim))
            S = rng.normal(size=(dim, dim))
            return affine_forward(0.3 * G @ G.T + (S - S.T), rng.normal(size=dim))
        if kind == "scaled_identity":
            return make_forward(kind, dim, lam=float(rng.uniform(0.1, 1.0)))
        return make_forward("zero", dim)

    blocks = []
    for _ in range(int(rng.integers(1, 3))):
        g = int(rng.integers(1, 4))
        blocks.append(Block(r=rng.normal(size=g), B=resolvent(g), Dinv=forward(g),
                            L=rng.normal(size=(g, d))))
    return CompositeProblem(z=rng.normal(size=d), A=resolvent(d), C=forward(d), blocks=blocks)


TRACE_FIELDS = ("gamma", "x", "y", "p", "q", "res_primal", "res_yq", "moment_a", "moment_b",
                "moment_c", "err_a", "err_b", "err_c")


def check_lift_equivalence(problems=20, seeds=5):
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(problems):
        p = random_composite_problem(rng)
        x0 = rng.normal(size=p.dim)
        v0 = [rng.normal(size=b.dim) for b in p.blocks]
        K = sum(p.dims)
        for s in range(seeds):
            noise = _noise(K, float(rng.uniform(0.01, 0.5)), float(rng.uniform(0.5, 0.95)))
            cfg = FBFConfig(max_iters=200, noise=noise, seed=int(rng.integers(2 ** 63)))
            t1 = solve_primal_dual(p, cfg, x0, v0)[0]
            t2 = run_lifted(p, cfg, x0, v0)[0]
            same = len(t1) == len(t2) and all(
                np.array_equal(getattr(t1, f), getattr(t2, f)) for f in TRACE_FIELDS)
            mismatches += not same
    return Report("lift_equivalence", mismatches == 0, float(-mismatches) if mismatches else 0.0,
                  violation_rate=mismatches / (problems * seeds))


def check_convex_toy():
    # grid-search oracle over [-2, 2] at resolution 1e-6
    grid = np.linspace(-2.0, 2.0, 4_000_001)
    x_star = float(grid[np.argmin(2 * np.abs(grid) + 0.5 * (grid - 1.0) ** 2)])
    tr, x_bar, _ = solve_convex(convex_toy(), FBFConfig(max_iters=2000, stop_tol=1e-13),
                                [1.0], [[0.0]])
    err = abs(float(x_bar[0]) - x_star)
    return Report("convex_specialization", abs(x_star) <= 1e-6 and err <= 1e-5, 1e-5 - err,
                  details={"x_bar": float(x_bar[0]), "grid_minimizer": x_star})


def check_metric_reduction(samples=1000):
    rng = np.random.default_rng(99)
    skew = make_forward("skew_rotation", 2)
    exact_fail, worst = 0, 0.0
    for _ in range(samples):
        A = make_resolvent(str(rng.choice(["l1", "box_projection", "elastic_net", "zero"])), 2)
        x = rng.normal(size=2) * 10 ** rng.uniform(-3, 3)
        gamma = float(rng.uniform(0.05, 0.9))
        errors = tuple(rng.normal(size=2) * rng.uniform(0, 1) for _ in range(3))
        r1 = fbf_step(A, skew, x, gamma, errors)
        r2 = fbf_step_metric(A, skew, Metric.identity(2), x, gamma, errors)
        exact_fail += not all(np.array_equal(u, v) for u, v in zip(r1, r2))
        lam = float(rng.uniform(0.1, 5.0))
        g2 = float(rng.uniform(0.05, 0.9)) / lam
        zero = make_resolvent("zero", 2)
        s1 = fbf_step_metric(zero, skew, Metric.scalar(lam, 2), x, g2)[0]
        s2 = fbf_step(zero, skew, x, g2 * lam)[0]
        worst = max(worst, float(np.max(np.abs(s1 - s2)) / max(1.0, np.max(np.abs(s2)))))
    ok = exact_fail == 0 and worst <= 1e-12
    return Report("metric_reduction", ok, 1e-12 - worst,
                  details={"identity_mismatches": exact_fail, "scalar_worst_rel": worst})


def check_uniform_monotone():
    en = PROBLEMS["rotation_elastic_net"][0](max_iters=1000)
    # same start and step for the merely monotone comparison
    l1_same = _inclusion("l1", [10.0, 0.0])(max_iters=1000)
    hit8 = _first_below(en, 1e-8)
    en6, l16 = _first_below(en, 1e-6), _first_below(l1_same, 1e-6)
    ok = hit8 is not None and en6 is not None and l16 is not None and en6 < l16
    return Report("uniform_monotonicity", ok, float(1e-8 - en.dist_ref[-1]),
                  details={"elastic_net_hit_1e-8": hit8, "elastic_net_hit_1e-6": en6,
                           "l1_hit_1e-6": l16})


def check_vi(samples=1000):
    tr = PROBLEMS["vi_box"][0](max_iters=1000)
    x_bar = tr.final
    f = make_function("box_projection", 2)
    ys = np.random.default_rng(5).uniform(-1.0, 1.0, size=(samples, 2))
    gap = vi_gap(f, _skew(), x_bar, ys)
    norm = float(np.linalg.norm(x_bar))
    return Report("variational_inequality", norm <= 1e-6 and gap <= 1e-8,
                  min(1e-6 - norm, 1e-8 - gap), details={"norm": norm, "gap": gap})


REPRO_CONFIG = """
problem: {type: inclusion, dim: 2, A: l1, B: skew_rotation}
solver: {max_iters: 300}
noise: {all: {kind: gaussian_geometric, sigma: 0.1, rho: 0.9}}
seeds: [1, 2, 3]
x0: [1.0, 0.0]
reference: [0.0, 0.0]
tol: 1.0e-3
"""


def _read_all(folder):
    out = {}
    for name in sorted(os.listdir(folder)):
        with open(os.path.join(folder, name), "rb") as fh:
            out[name] = fh.read()
    return out


def check_reproducibility():
    cfg = parse_config(REPRO_CONFIG)
    with tempfile.TemporaryDirectory() as tmp:
        a, b = os.path.join(tmp, "a"), os.path.join(tmp, "b")
        run_batch(cfg, out=a, dump_iterates=True)
        run_batch(cfg, out=b, dump_iterates=True)
        same = _read_all(a) == _read_all(b)
    return Report("reproducibility", same, 0.0 if same else -1.0)


CHECKS = [
    (1, "deterministic convergence", check_deterministic),
    (2, "single-step oracle", check_single_step),
    (3, "stochastic convergence", check_stochastic),
    (4, "residual summability", check_summability),
    (5, "quasi-Fejer monotonicity", check_quasi_fejer),
    (6, "Robbins-Siegmund instantiation", check_robbins_siegmund),
    (7, "lift equivalence", check_lift_equivalence),
    (8, "convex specialization", check_convex_toy),
    (9, "metric reduction", check_metric_reduction),
    (10, "strong convergence under uniform monotonicity", check_uniform_monotone),
    (11, "variational inequality", check_vi),
    (12, "reproducibility", check_reproducibility),
]


def run_all():
    for number, title, fn in CHECKS:
        yield number, title, fn()
