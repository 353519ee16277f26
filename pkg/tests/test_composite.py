import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import box_ind, grid_argmin_1d
from fbfsplit.acceptance import random_composite_problem
from fbfsplit.composite import (Block, CompositeProblem, ConvexBlock, ConvexProblem, beta_bound,
                                inclusion_residuals, lift, primal_objective, run_lifted,
                                solve_convex, solve_primal_dual, solve_variational_inequality,
                                vi_gap)
from fbfsplit.exceptions import DimensionError
from fbfsplit.fbf import FBFConfig
from fbfsplit.operators import (ForwardOp, certify_monotone_lipschitz, make_forward,
                                make_function, make_resolvent)
from fbfsplit.stochastic import NoiseSchedule


def _fwd(beta, dim=1):
    return ForwardOp("lin", dim, lambda x: beta * x, beta=beta)


def _block(L, nu=0.0, B="zero"):
    L = np.array(L, dtype=float, ndmin=2)
    g = L.shape[0]
    return Block(r=np.zeros(g), B=make_resolvent(B, g), Dinv=_fwd(nu, g), L=L)


@pytest.mark.parametrize("nu0, blocks, expected", [
    (1.0, [_block([[3.0]], nu=2.0)], 5.0),
    (0.0, [_block([[1.0]])], 1.0),
    (0.0, [_block([[3.0]], nu=0.5), _block([[4.0]])], 5.5),
])
def test_beta_bound(nu0, blocks, expected):
    p = CompositeProblem(z=[0.0], A=make_resolvent("zero", 1), C=_fwd(nu0), blocks=blocks)
    assert beta_bound(p) == pytest.approx(expected)


def test_operator_norm_is_largest_singular_value():
    L = np.random.default_rng(0).normal(size=(3, 4))
    b = _block(L)
    assert abs(b.L_norm - np.linalg.svd(L, compute_uv=False)[0]) <= 1e-10


def test_canonical_skew_lift():
    p = CompositeProblem(z=[0.0], A=make_resolvent("zero", 1), C=make_forward("zero", 1),
                         blocks=[_block([[1.0]])])
    _, B = lift(p)
    np.testing.assert_array_equal(B.evaluate(np.array([2.0, 3.0])), [3.0, -2.0])


def test_lift_resolvent_split():
    # primal part: J_{gamma d|.|}(x + gamma z) with z = 1, gamma = 1, x = 2 -> soft(3, 1) = 2
    p = CompositeProblem(z=[1.0], A=make_resolvent("l1", 1), C=make_forward("zero", 1),
                         blocks=[_block([[1.0]], B="l1")])
    A, _ = lift(p)
    out = A.evaluate(1.0, np.array([2.0, 5.0]))
    expected = grid_argmin_1d(lambda q: np.abs(q) + 0.5 * (q - 3.0) ** 2, -4, 4, 1e-4)
    assert out[0] == pytest.approx(expected, abs=1e-4)
    assert out[0] == 2.0
    assert out[1] == 1.0  # J of the inverse of d|.| is the clamp onto [-1, 1]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_coupling_part_is_skew(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    blocks = [_block(rng.normal(size=(int(rng.integers(1, 4)), d))) for _ in range(2)]
    p = CompositeProblem(z=np.zeros(d), A=make_resolvent("zero", d),
                         C=make_forward("zero", d), blocks=blocks)
    _, B = lift(p)
    u = rng.normal(size=sum(p.dims))
    assert abs(u @ B.evaluate(u)) <= 1e-12 * max(1.0, u @ u) * beta_bound(p)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_beta_bound_dominates_lifted_lipschitz(seed):
    p = random_composite_problem(np.random.default_rng(seed))
    _, B = lift(p)
    assert certify_monotone_lipschitz(B, samples=40, rng_seed=seed).passed


def _toy():
    return ConvexProblem(z=[0.0], f=make_function("l1", 1),
                         h_grad=make_forward("quadratic", 1, center=1.0),
                         blocks=[ConvexBlock(r=[0.0], g=make_function("l1", 1), L=[[1.0]])],
                         h_value=make_function("quadratic", 1, center=1.0))


def test_convex_toy_matches_grid_search():
    x_star = grid_argmin_1d(lambda x: 2 * np.abs(x) + 0.5 * (x - 1) ** 2, -2, 2, 1e-6)
    assert abs(x_star) <= 1e-6
    tr, x, v = solve_convex(_toy(), FBFConfig(max_iters=2000, stop_tol=1e-13), [1.0], [[0.0]])
    assert abs(x[0] - x_star) <= 1e-5
    primal, duals = inclusion_residuals(_toy().to_composite(), x, v)
    assert primal <= 1e-4 and max(duals) <= 1e-4
    assert primal_objective(_toy(), x) <= primal_objective(_toy(), [x_star]) + 1e-8


def test_composite_primal_dual_example():
    # A = d|.|, C = x - 1, B_1 = d|.|, D^{-1} = 0, L = 1
    p = CompositeProblem(z=[0.0], A=make_resolvent("l1", 1),
                         C=make_forward("quadratic", 1, center=1.0),
                         blocks=[Block(r=[0.0], B=make_resolvent("l1", 1),
                                       Dinv=make_forward("zero", 1), L=[[1.0]])])
    _, x, v = solve_primal_dual(p, FBFConfig(max_iters=2000, stop_tol=1e-13), [0.7], [[0.0]])
    assert abs(x[0]) <= 1e-8
    assert 0.0 - 1e-8 <= v[0][0] <= 1.0 + 1e-8


def test_unconstrained_quadratic():
    c = np.array([1.5, -0.5])
    p = ConvexProblem(z=np.zeros(2), f=make_function("zero", 2),
                      h_grad=make_forward("quadratic", 2, center=c),
                      blocks=[ConvexBlock(r=np.zeros(2), g=make_function("zero", 2),
                                          L=np.eye(2))])
    _, x, _ = solve_convex(p, FBFConfig(max_iters=3000, stop_tol=1e-14))
    np.testing.assert_allclose(x, c, atol=1e-8)


def test_all_zero_problem_is_fixed():
    # the dual operator touched by the iteration is B^{-1}; it vanishes when
    # B is the normal cone of {0}
    p = CompositeProblem(z=[0.0, 0.0], A=make_resolvent("zero", 2), C=make_forward("zero", 2),
                         blocks=[_block(np.zeros((1, 2)), B="indicator_zero")])
    tr, x, v = solve_primal_dual(p, FBFConfig(max_iters=5), [0.3, -1.0], [[2.0]])
    np.testing.assert_array_equal(x, [0.3, -1.0])
    np.testing.assert_array_equal(v[0], [2.0])
    assert np.all(tr.res_primal == 0)


@pytest.mark.parametrize("seed", range(4))
def test_lift_equivalence_is_bit_exact(seed):
    rng = np.random.default_rng(100 + seed)
    p = random_composite_problem(rng)
    K = sum(p.dims)
    g = NoiseSchedule.gaussian(K, 0.2, 0.8)
    u = NoiseSchedule.uniform(K, 0.1, 0.9)
    cfg = FBFConfig(max_iters=150, noise=(g, u, g), seed=seed)
    x0 = rng.normal(size=p.dim)
    v0 = [rng.normal(size=b.dim) for b in p.blocks]
    t1, x1, v1 = solve_primal_dual(p, cfg, x0, v0)
    t2, x2, v2 = run_lifted(p, cfg, x0, v0)
    for f in ("x", "y", "p", "q", "gamma", "res_primal", "res_yq", "err_a", "err_b", "err_c"):
        assert np.array_equal(getattr(t1, f), getattr(t2, f)), f
    assert t1.to_csv() == t2.to_csv()


def test_composite_dimension_checks():
    with pytest.raises(DimensionError):
        CompositeProblem(z=[0.0, 0.0], A=make_resolvent("zero", 2), C=make_forward("zero", 2),
                         blocks=[_block([[1.0]])])
    with pytest.raises(ValueError):
        CompositeProblem(z=[0.0], A=make_resolvent("zero", 1), C=make_forward("zero", 1),
                         blocks=[])


def test_vi_box_rotation():
    f = make_function("box_projection", 2)
    B = make_forward("skew_rotation", 2)
    tr, x = solve_variational_inequality(f, B, FBFConfig(gamma=0.5, max_iters=1000), [1.0, 0.0])
    assert np.linalg.norm(x) <= 1e-6
    ys = np.random.default_rng(0).uniform(-1, 1, size=(1000, 2))
    assert vi_gap(f, B, x, ys) <= 1e-8
    # the oracle: box indicator is finite exactly on the sampled set
    assert np.all(box_ind(ys) == 0)


def test_vi_reduces_to_equation():
    c = np.array([0.4, -1.2])
    f = make_function("zero", 2)
    B = make_forward("quadratic", 2, center=c)
    _, x = solve_variational_inequality(f, B, FBFConfig(max_iters=2000, stop_tol=1e-14),
                                        [0.0, 0.0])
    np.testing.assert_allclose(x, c, atol=1e-10)


def test_vi_with_zero_operator_is_prox_fixed_point():
    _, x = solve_variational_inequality(make_function("l1", 1), make_forward("zero", 1),
                                        FBFConfig(max_iters=50), [3.0])
    assert x[0] == 0.0
