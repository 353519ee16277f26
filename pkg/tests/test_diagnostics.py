import json
import math

import numpy as np
import pytest

from fbfsplit.diagnostics import (SupermartingaleTrace, convergence_report, epsilon_bound,
                                  fbf_supermartingale, pass_rate, quasi_fejer_check,
                                  robbins_siegmund_check, summability_report)
from fbfsplit.fbf import FBFConfig, IterateTrace, run
from fbfsplit.operators import make_forward, make_resolvent
from fbfsplit.space import MetricSequence
from fbfsplit.stochastic import NoiseSchedule

SKEW = make_forward("skew_rotation", 2)
N = 40


def test_rs_telescoping_equality():
    n = np.arange(N)
    rep = robbins_siegmund_check(SupermartingaleTrace(z=2.0 ** -n, xi=2.0 ** (-n - 1)))
    assert rep.passed
    assert rep.worst_margin == pytest.approx(0.0, abs=1e-15)
    assert rep.details["z_last"] < 1e-10
    assert rep.details["xi_partial_sum"] == pytest.approx(1.0, abs=1e-10)


def test_rs_constant():
    rep = robbins_siegmund_check(SupermartingaleTrace(z=np.ones(N)))
    assert rep.passed and rep.details["z_last"] == 1.0
    assert rep.details["z_tail_oscillation"] == 0.0


def test_rs_growing_fails_everywhere():
    rep = robbins_siegmund_check(SupermartingaleTrace(z=np.arange(N, dtype=float)))
    assert not rep.passed and rep.violation_rate == 1.0


def test_rs_needs_two_points():
    with pytest.raises(ValueError):
        robbins_siegmund_check(SupermartingaleTrace(z=[1.0]))
    with pytest.raises(ValueError):
        SupermartingaleTrace(z=[1.0, -1.0])


def test_quasi_fejer_rotation_run():
    tr = run(make_resolvent("box_projection", 2), SKEW, 1.0, FBFConfig(gamma=0.5, max_iters=30),
             [1.0, 0.0], [0.0, 0.0])
    rep = quasi_fejer_check(tr)
    assert rep.passed
    assert tr.dist_ref[1] == pytest.approx(math.sqrt(0.8125))
    assert np.all(np.diff(tr.dist_ref) < 0)


def test_quasi_fejer_proximal_point():
    # B = 0, gamma = 1, x0 = 2 on d|.|: iterates 2, 1, 0, 0, ...
    tr = run(make_resolvent("l1", 1), make_forward("zero", 1), 0.0,
             FBFConfig(gamma=1.0, max_iters=5), [2.0], [0.0])
    np.testing.assert_array_equal(tr.dist_ref[:4], [2.0, 1.0, 0.0, 0.0])
    assert quasi_fejer_check(tr).passed


def _fake_trace(d):
    d = np.asarray(d, dtype=float)
    n = d.size - 1
    x = np.column_stack([d, np.zeros_like(d)])
    z = np.zeros(n)
    return IterateTrace(gamma=np.full(n, 0.5), x=x, y=x[:-1], p=x[:-1], q=x[1:],
                        res_primal=z, res_yq=z, reference=np.zeros(2), dist_ref=d,
                        moment_a=z, moment_b=z, moment_c=z, beta=1.0)


def test_quasi_fejer_adversarial_doubling():
    d = 2.0 ** np.arange(6)
    rep = quasi_fejer_check(_fake_trace(d), np.zeros(2), eta=0.0, eps_bound=0.0)
    assert not rep.passed
    assert rep.violation_rate == 1.0
    assert rep.worst_margin == pytest.approx(-d[-2])


def test_quasi_fejer_needs_target():
    tr = run(make_resolvent("l1", 2), SKEW, 1.0, FBFConfig(max_iters=3), [1.0, 0.0])
    with pytest.raises(ValueError):
        quasi_fejer_check(tr)
    assert quasi_fejer_check(tr, np.zeros(2)).passed


def test_summability_examples():
    geo = summability_report(2.0 ** -np.arange(60))
    assert geo.passed and geo.details["sum_res_primal_sq"] == pytest.approx(4 / 3)
    const = summability_report(np.ones(100))
    assert not const.passed and const.details["ratio_res_primal"] == pytest.approx(0.1)
    zero = summability_report(np.zeros(10))
    assert zero.passed and zero.details["sum_res_primal_sq"] == 0.0


def test_epsilon_bound_moment_form():
    g = NoiseSchedule.gaussian(2, 0.1, 0.9)
    tr = run(make_resolvent("l1", 2), SKEW, 1.0, FBFConfig(max_iters=5, noise=(g, g, g)),
             [1.0, 0.0], [0.0, 0.0])
    m = 0.1 * math.sqrt(2) * 0.9 ** np.arange(5)
    # beta = mu = alpha = 1: 2(m + m) + m + m = 6m
    np.testing.assert_allclose(epsilon_bound(tr, realized=False), 6 * m)


@pytest.mark.parametrize("metric", [None, MetricSequence.geometric([1.0, 2.0], c=1.0, rho=0.5)])
def test_noisy_quasi_fejer_holds_pathwise_with_realized_errors(metric):
    g = NoiseSchedule.gaussian(2, 0.2, 0.9)
    fails = 0
    for seed in range(40):
        tr = run(make_resolvent("l1", 2), SKEW, 1.0,
                 FBFConfig(max_iters=200, noise=(g, g, g), seed=seed, metric_seq=metric),
                 [1.0, 0.0], [0.0, 0.0])
        fails += not quasi_fejer_check(tr).passed
    assert fails == 0


def test_noisy_run_can_violate_exact_fejer():
    # the inequality without the error term is a conditional statement only
    g = NoiseSchedule.gaussian(2, 0.5, 0.9)
    reps = []
    for seed in range(20):
        tr = run(make_resolvent("l1", 2), SKEW, 1.0,
                 FBFConfig(max_iters=50, noise=(g, g, g), seed=seed), [1.0, 0.0], [0.0, 0.0])
        reps.append(quasi_fejer_check(tr, eps_bound=0.0))
    assert pass_rate(reps) < 1.0
    assert any(r.violation_rate > 0 for r in reps)


@pytest.mark.parametrize("name, metric", [
    ("l1", None), ("box_projection", None), ("elastic_net", None),
    ("l1", MetricSequence.geometric([1.0, 2.0])),
])
def test_fbf_supermartingale_zero_noise(name, metric):
    tr = run(make_resolvent(name, 2), SKEW, 1.0, FBFConfig(max_iters=300, metric_seq=metric),
             [2.0, -1.0], [0.0, 0.0])
    assert robbins_siegmund_check(fbf_supermartingale(tr)).passed


def test_convergence_report():
    tr = run(make_resolvent("elastic_net", 2), SKEW, 1.0, FBFConfig(max_iters=200),
             [1.0, 0.0], [0.0, 0.0])
    rep = convergence_report(tr, tol=1e-8)
    assert rep.passed and rep.details["first_hit"] is not None


def test_report_json_schema():
    rep = summability_report(np.ones(10))
    data = json.loads(rep.to_json())
    assert set(data) == {"check", "pass", "worst_margin", "violation_rate", "details"}
    assert data["pass"] is False
