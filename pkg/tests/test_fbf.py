import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import grid_prox
from fbfsplit.exceptions import (DivergenceError, NonFiniteError, StepSizeError,
                                 UnsupportedCombinationError)
from fbfsplit.fbf import (TRACE_COLUMNS, FBFConfig, fbf_step, fbf_step_metric, run,
                          step_size_interval)
from fbfsplit.operators import ForwardOp, make_forward, make_resolvent
from fbfsplit.space import Metric, MetricSequence
from fbfsplit.stochastic import NoiseSchedule

SKEW = make_forward("skew_rotation", 2)
ZERO_A = make_resolvent("zero", 2)
ZERO_B = make_forward("zero", 2)
S = np.array([[0.0, 1.0], [-1.0, 0.0]])


@pytest.mark.parametrize("beta, mu, eps, expected", [
    (1.0, 1.0, 0.1, (0.1, 0.9)),
    (2.0, 1.0, 0.2, (0.2, 0.4)),
])
def test_step_size_interval(beta, mu, eps, expected):
    assert step_size_interval(beta, mu, eps) == pytest.approx(expected)


def test_step_size_interval_names_bound():
    with pytest.raises(StepSizeError, match="0.5"):
        step_size_interval(1.0, 1.0, 0.6)


def test_trivial_problem_is_fixed():
    x = np.array([0.3, -2.0])
    np.testing.assert_array_equal(fbf_step(ZERO_A, ZERO_B, x, 0.37)[0], x)


def test_single_rotation_step():
    x_next = fbf_step(ZERO_A, SKEW, np.array([1.0, 0.0]), 0.5)[0]
    np.testing.assert_allclose(x_next, [0.75, 0.5], atol=1e-14)


@given(st.floats(0.01, 0.99), st.floats(-5, 5), st.floats(-5, 5))
def test_rotation_step_closed_form(gamma, a, b):
    # with A = 0 and S^2 = -Id: x+ = (1 - gamma^2) x - gamma S x
    x = np.array([a, b])
    expected = (1 - gamma ** 2) * x - gamma * (S @ x)
    np.testing.assert_allclose(fbf_step(ZERO_A, SKEW, x, gamma)[0], expected,
                               atol=1e-13 * (1 + np.abs(x).max()))


def test_proximal_point_step():
    A = make_resolvent("l1", 2)
    x = np.array([2.0, -0.4])
    np.testing.assert_array_equal(fbf_step(A, ZERO_B, x, 1.0)[0], A.evaluate(1.0, x))


def test_non_finite_reports_substep():
    blow = ForwardOp("blow", 2, lambda x: np.full(2, np.inf), beta=1.0)
    with pytest.raises(NonFiniteError) as info:
        fbf_step(ZERO_A, blow, np.ones(2), 0.5)
    assert info.value.substep == "y"


def test_metric_step_identity_matches_plain():
    rng = np.random.default_rng(0)
    A = make_resolvent("l1", 2)
    for _ in range(50):
        x = rng.normal(size=2)
        errors = tuple(rng.normal(size=2) for _ in range(3))
        r1 = fbf_step(A, SKEW, x, 0.4, errors)
        r2 = fbf_step_metric(A, SKEW, Metric.identity(2), x, 0.4, errors)
        for u, v in zip(r1, r2):
            assert np.array_equal(u, v)


def test_scalar_metric_absorbs_into_step():
    x_next = fbf_step_metric(ZERO_A, SKEW, Metric.scalar(2.0, 2), np.array([1.0, 0.0]), 0.25)[0]
    np.testing.assert_allclose(x_next, [0.75, 0.5], atol=1e-14)


def test_metric_prox_example():
    A = make_resolvent("l1", 2)
    x_next = fbf_step_metric(A, ZERO_B, Metric.diagonal([1.0, 1.0]), np.array([2.0, 0.0]), 0.5)[0]
    np.testing.assert_allclose(x_next, grid_prox(np.abs, 0.5, [2.0, 0.0]), atol=1e-4)
    np.testing.assert_allclose(x_next, [1.5, 0.0], atol=1e-14)


def test_diagonal_metric_prox_per_coordinate():
    # p minimizes |p|_1 + (2 gamma)^{-1} |p - y|^2_{U^{-1}}: per-coordinate step gamma u_i
    A = make_resolvent("l1", 2)
    U = Metric.diagonal([0.5, 3.0])
    y = np.array([1.3, -2.2])
    p = fbf_step_metric(A, ZERO_B, U, y, 0.4)[1:3][1]
    np.testing.assert_allclose(p, grid_prox(np.abs, 0.4 * np.array([0.5, 3.0]), y), atol=1e-4)


def test_unsupported_metric_combination():
    affine = make_resolvent("affine", 2, M=[[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(UnsupportedCombinationError):
        fbf_step_metric(affine, SKEW, Metric([[2.0, 0.5], [0.5, 1.0]]), np.ones(2), 0.1)
    with pytest.raises(UnsupportedCombinationError):
        fbf_step_metric(affine, SKEW, Metric.diagonal([1.0, 2.0]), np.ones(2), 0.1)
    l1 = make_resolvent("l1", 2)
    with pytest.raises(UnsupportedCombinationError):
        fbf_step_metric(l1, SKEW, Metric([[2.0, 0.5], [0.5, 1.0]]), np.ones(2), 0.1)


def test_box_rotation_run_contracts():
    A = make_resolvent("box_projection", 2)
    tr = run(A, SKEW, 1.0, FBFConfig(gamma=0.5, max_iters=200), [1.0, 0.0], [0.0, 0.0])
    d = tr.dist_ref
    assert np.all(np.diff(d) <= 0)
    assert d[-1] <= 1e-6
    assert d[1] == pytest.approx(math.sqrt(0.8125), abs=1e-15)


def test_l1_rotation_finite_identification():
    tr = run(make_resolvent("l1", 2), SKEW, 1.0, FBFConfig(max_iters=500), [1.0, 0.0],
             [0.0, 0.0])
    # soft-thresholding hits exact zeros after finitely many steps
    assert np.any(np.all(tr.p == 0.0, axis=1))
    assert tr.dist_ref[-1] <= 1e-12


def test_noisy_run_seed_42():
    g = NoiseSchedule.gaussian(2, 0.1, 0.9)
    cfg = FBFConfig(max_iters=5001, noise=(g, g, g), seed=42)
    tr = run(make_resolvent("l1", 2), SKEW, 1.0, cfg, [1.0, 0.0], [0.0, 0.0])
    # the run may stop early once the residual is exactly zero, after which
    # noise has underflowed and the iterate is a fixed point
    n = min(5000, len(tr) - 1)
    assert tr.res_primal[n] <= 1e-3
    assert tr.status == "converged" or len(tr) == 5001


def test_quadrilateral_identity_is_exact():
    g = NoiseSchedule.gaussian(2, 0.3, 0.8)
    tr = run(make_resolvent("elastic_net", 2), SKEW, 1.0,
             FBFConfig(max_iters=100, noise=(g, g, g), seed=1), [2.0, -1.0])
    assert np.array_equal(tr.x[1:], tr.x[:-1] - tr.y + tr.q)


def test_divergence_guard():
    fast = ForwardOp("fast", 2, lambda x: 100.0 * (S @ x), beta=0.01)
    cfg = FBFConfig(max_iters=1000, certify=False)
    with pytest.raises(DivergenceError) as info:
        run(ZERO_A, fast, None, cfg, [1.0, 0.0])
    assert info.value.trace is not None and info.value.trace.status == "diverged"


def test_run_rejects_understated_beta():
    fast = ForwardOp("fast", 2, lambda x: 3.0 * (S @ x), beta=1.0)
    with pytest.raises(ValueError, match="certification"):
        run(ZERO_A, fast, None, FBFConfig(max_iters=5), [1.0, 0.0])


def test_step_rule_validation():
    with pytest.raises(StepSizeError):
        run(ZERO_A, SKEW, 1.0, FBFConfig(gamma=0.95, epsilon=0.1), [1.0, 0.0])
    tr = run(ZERO_A, SKEW, 1.0, FBFConfig(gamma=[0.2, 0.5, 0.8], max_iters=5), [1.0, 0.0])
    assert tr.gamma.tolist() == [0.2, 0.5, 0.8, 0.8, 0.8]
    tr = run(ZERO_A, SKEW, 1.0, FBFConfig(max_iters=3), [1.0, 0.0])
    assert tr.gamma.tolist() == [0.5, 0.5, 0.5]


def test_stop_tol():
    tr = run(make_resolvent("l1", 2), SKEW, 1.0, FBFConfig(max_iters=1000, stop_tol=1e-3),
             [1.0, 0.0])
    assert tr.status == "converged"
    assert tr.res_primal[-1] <= 1e-3 and np.all(tr.res_primal[:-1] > 1e-3)


def test_trace_csv_schema():
    g = NoiseSchedule.uniform(2, 0.1, 0.5)
    tr = run(make_resolvent("l1", 2), SKEW, 1.0,
             FBFConfig(max_iters=10, noise=(g, g, g), metric_seq=MetricSequence.identity(2)),
             [1.0, 0.0], [0.0, 0.0])
    rows = list(csv.reader(io.StringIO(tr.to_csv())))
    assert tuple(rows[0]) == TRACE_COLUMNS
    assert rows[0] == "n,gamma,res_primal,res_yq,dist_ref,metric_dist,moment_a,moment_b,moment_c".split(",")
    assert len(rows) == 1 + len(tr) + 1
    assert [int(r[0]) for r in rows[1:]] == list(range(len(tr) + 1))
    assert float(rows[1][6]) == pytest.approx(0.1 * math.sqrt(2 / 3))
    assert rows[-1][1] == "" and rows[-1][4] != ""
    assert tr.iterates_csv().splitlines()[0] == "n,x0,x1"


def test_metric_trace_records_metric_distance():
    seq = MetricSequence.geometric([1.0, 2.0], c=1.0, rho=0.5)
    tr = run(make_resolvent("l1", 2), SKEW, 1.0, FBFConfig(max_iters=50, metric_seq=seq),
             [1.0, 1.0], [0.0, 0.0])
    U0 = seq(0)
    assert tr.metric_dist[0] == pytest.approx(math.sqrt(1 / 2 + 1 / 4))
    assert tr.metric_dist[0] == pytest.approx(math.sqrt(np.ones(2) @ U0.solve(np.ones(2))))
    assert tr.metric_dist[-1] < 1e-6


PROBLEMS = ["l1", "box_projection", "elastic_net", "zero", "quadratic"]


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(PROBLEMS), st.floats(0.05, 0.9), st.floats(-5, 5), st.floats(-5, 5))
def test_zero_noise_fejer_monotone(name, gamma, a, b):
    # 0 is a zero of A + S for each of these A
    tr = run(make_resolvent(name, 2), SKEW, 1.0,
             FBFConfig(gamma=gamma, epsilon=0.05, max_iters=100), [a, b], [0.0, 0.0])
    assert np.all(tr.dist_ref[1:] <= tr.dist_ref[:-1] + 1e-12)
