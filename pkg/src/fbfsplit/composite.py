"""Primal-dual composite inclusions, convex minimization and variational inequalities.

The composite problem finds ``x`` with

    z in A x + sum_i L_i^T ((B_i [] D_i)(L_i x - r_i)) + C x

together with dual variables ``v_i``. It is solved by running the FBF
iteration on the product space ``K = H x G_1 x ... x G_m`` with

    A_K(x, v) = (-z + A x) x (r_i + B_i^{-1} v_i)_i
    B_K(x, v) = (C x + sum_i L_i^T v_i, (D_i^{-1} v_i - L_i x)_i)

where ``B_K`` is monotone and Lipschitz with constant
``max nu + sqrt(sum |L_i|^2)``. :func:`solve_primal_dual` runs the iteration
written out blockwise; :func:`lift` exposes ``(A_K, B_K)`` so the same
trajectory can be reproduced through :func:`fbfsplit.fbf.run`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError
from .fbf import FBFConfig, _check_finite, iterate, run
from .operators import (ForwardOp, ResolventOp, certify_monotone_lipschitz,
                        inverse_resolvent, zero_forward)
from .space import as_vector

__all__ = [
    "Block",
    "CompositeProblem",
    "ConvexBlock",
    "ConvexProblem",
    "beta_bound",
    "lift",
    "solve_primal_dual",
    "solve_convex",
    "solve_variational_inequality",
    "primal_objective",
    "inclusion_residuals",
    "vi_gap",
]


def _operator_norm(L):
    return float(np.linalg.norm(L, 2))


@dataclass(eq=False)
class Block:
    """One dual block ``(r_i, B_i, D_i^{-1}, L_i)`` with ``L_i : H -> G_i``."""

    r: np.ndarray
    B: ResolventOp
    Dinv: ForwardOp
    L: np.ndarray
    L_norm: float = field(init=False)

    def __post_init__(self):
        self.L = np.array(self.L, dtype=float, ndmin=2)
        self.r = as_vector(self.r, self.L.shape[0], "r")
        g = self.L.shape[0]
        if self.B.dim != g or self.Dinv.dim != g:
            raise DimensionError(
                f"block operators act on dims {self.B.dim}/{self.Dinv.dim}, L maps into {g}")
        self.L_norm = _operator_norm(self.L)

    @property
    def dim(self):
        return self.L.shape[0]


@dataclass(eq=False)
class CompositeProblem:
    """``z in A x + sum_i L_i^T (B_i [] D_i)(L_i x - r_i) + C x``.

    Parameters
    ----------
    z : array_like
    A : ResolventOp
    C : ForwardOp
        Monotone, ``nu_0``-Lipschitz (``C.beta``).
    blocks : list of Block
    """

    z: np.ndarray
    A: ResolventOp
    C: ForwardOp
    blocks: list

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("need at least one block")
        self.z = as_vector(self.z, self.A.dim, "z")
        if self.C.dim != self.A.dim:
            raise DimensionError(f"C acts on dim {self.C.dim}, A on {self.A.dim}")
        for i, b in enumerate(self.blocks):
            if b.L.shape[1] != self.A.dim:
                raise DimensionError(
                    f"blocks[{i}].L has {b.L.shape[1]} columns, primal dim is {self.A.dim}")

    @property
    def dim(self):
        return self.A.dim

    @property
    def dims(self):
        return (self.dim,) + tuple(b.dim for b in self.blocks)

    def split(self, u):
        parts = np.split(u, np.cumsum(self.dims)[:-1])
        return parts[0], parts[1:]

    def certify(self, samples=32, rng_seed=0):
        """Certify ``C`` and every ``D_i^{-1}`` as monotone and Lipschitz."""
        reps = [certify_monotone_lipschitz(self.C, samples, rng_seed)]
        reps += [certify_monotone_lipschitz(b.Dinv, samples, rng_seed) for b in self.blocks]
        return reps


def beta_bound(p):
    """``max(nu_0, ..., nu_m) + sqrt(sum_i |L_i|^2)``."""
    nu = max([p.C.beta] + [b.Dinv.beta for b in p.blocks])
    return nu + math.sqrt(sum(b.L_norm ** 2 for b in p.blocks))


# The helpers below are shared by the lifted operators and the blockwise
# loop so both perform identical floating-point operations.

def _primal_forward(p, x, vs):
    s = p.C.evaluate(x)
    for b, v in zip(p.blocks, vs):
        s = s + b.L.T @ v
    return s


def _primal_resolvent(p, gamma, y):
    return p.A.evaluate(gamma, y + gamma * p.z)


def _dual_resolvent(b, gamma, w):
    return inverse_resolvent(b.B, gamma, w - gamma * b.r)


def lift(p):
    """Product-space operators ``(A_K, B_K)`` acting on packed arrays."""
    dims = p.dims

    def a_eval(gamma, u):
        x, vs = p.split(u)
        parts = [_primal_resolvent(p, gamma, x)]
        parts += [_dual_resolvent(b, gamma, v) for b, v in zip(p.blocks, vs)]
        return np.concatenate(parts)

    def b_eval(u):
        x, vs = p.split(u)
        parts = [_primal_forward(p, x, vs)]
        parts += [b.Dinv.evaluate(v) - b.L @ x for b, v in zip(p.blocks, vs)]
        return np.concatenate(parts)

    K = sum(dims)
    A_K = ResolventOp(name="lifted_A", dim=K, evaluate=a_eval)
    B_K = ForwardOp(name="lifted_B", dim=K, evaluate=b_eval, beta=beta_bound(p))
    return A_K, B_K


def _pack(x0, v0, p):
    x0 = as_vector(x0, p.dim, "x0")
    if v0 is None:
        v0 = [np.zeros(b.dim) for b in p.blocks]
    if len(v0) != len(p.blocks):
        raise DimensionError(f"v0 has {len(v0)} blocks, problem has {len(p.blocks)}")
    vs = [as_vector(v, b.dim, f"v0[{i}]") for i, (v, b) in enumerate(zip(v0, p.blocks))]
    return np.concatenate([x0] + vs)


def solve_primal_dual(p, config=None, x0=None, v0=None, reference=None):
    """Blockwise primal-dual FBF iteration.

    The errors are drawn on the packed space exactly as :func:`fbf.run`
    draws them. The dual slices of ``a`` and ``c`` enter with a minus sign
    so that each dual update coincides with the lifted one bit for bit.

    Returns
    -------
    trace : IterateTrace
        Trace on the packed space; ``trace.split()`` separates blocks.
    x_bar : ndarray
    v_bar : list of ndarray
    """
    config = FBFConfig() if config is None else config
    if config.metric_seq is not None:
        raise NotImplementedError("the primal-dual solver runs in the identity metric")
    beta = beta_bound(p)
    u0 = _pack(np.zeros(p.dim) if x0 is None else x0, v0, p)
    if reference is not None:
        reference = np.asarray(reference, dtype=float)
    if config.certify:
        for rep in p.certify():
            if not rep.passed:
                raise ValueError(f"operator certification failed: {rep.details}")

    def step(n, u, gamma, U, errors):
        x, vs = p.split(u)
        if errors is None:
            ea = eb = ec = None
        else:
            ea, eb, ec = (p.split(e) for e in errors)

        s = _primal_forward(p, x, vs)
        y1 = x - gamma * s if ea is None else x - gamma * (s + ea[0])
        _check_finite(y1, "y")
        p1 = _primal_resolvent(p, gamma, y1)
        if eb is not None:
            p1 = p1 + eb[0]
        _check_finite(p1, "p")

        y2s, p2s = [], []
        for i, (b, v) in enumerate(zip(p.blocks, vs)):
            w = b.L @ x - b.Dinv.evaluate(v)
            y2 = v + gamma * w if ea is None else v + gamma * (w + -ea[1][i])
            p2 = _dual_resolvent(b, gamma, y2)
            if eb is not None:
                p2 = p2 + eb[1][i]
            y2s.append(y2)
            p2s.append(p2)

        s = _primal_forward(p, p1, p2s)
        q1 = p1 - gamma * s if ec is None else p1 - gamma * (s + ec[0])
        q2s = []
        for i, (b, p2) in enumerate(zip(p.blocks, p2s)):
            w = b.L @ p1 - b.Dinv.evaluate(p2)
            q2s.append(p2 + gamma * w if ec is None else p2 + gamma * (w + -ec[1][i]))

        y = np.concatenate([y1] + y2s)
        pp = np.concatenate([p1] + p2s)
        _check_finite(pp, "p")
        q = np.concatenate([q1] + q2s)
        _check_finite(q, "q")
        u_next = u - y + q
        _check_finite(u_next, "x_next")
        return u_next, y, pp, q

    trace = iterate(step, u0, beta, config, reference=reference, dims=p.dims)
    x_bar, v_bar = trace.split()
    return trace, x_bar, v_bar


def run_lifted(p, config=None, x0=None, v0=None, reference=None):
    """:func:`fbf.run` on :func:`lift` ``(p)``; the reference twin of :func:`solve_primal_dual`."""
    config = FBFConfig() if config is None else config
    A_K, B_K = lift(p)
    u0 = _pack(np.zeros(p.dim) if x0 is None else x0, v0, p)
    trace = run(A_K, B_K, B_K.beta, config, u0, reference)
    trace.dims = p.dims
    x_bar, v_bar = trace.split()
    return trace, x_bar, v_bar


@dataclass(eq=False)
class ConvexBlock:
    """``g_k [] l_k`` composed with ``L_k . - r_k``.

    ``lstar_grad`` is the gradient of ``l_k*``; ``None`` means
    ``l_k = indicator of {0}``, for which ``g_k [] l_k = g_k``.
    """

    r: np.ndarray
    g: object
    L: np.ndarray
    lstar_grad: ForwardOp | None = None


@dataclass(eq=False)
class ConvexProblem:
    """``minimize f(x) - <x, z> + sum_k (g_k [] l_k)(L_k x - r_k) + h(x)``.

    Parameters
    ----------
    z : array_like
    f : ConvexFn
    h_grad : ForwardOp
        Gradient of ``h``, ``nu_0``-Lipschitz.
    blocks : list of ConvexBlock
    h_value : callable, optional
        Value of ``h`` for objective reporting.
    """

    z: np.ndarray
    f: object
    h_grad: ForwardOp
    blocks: list
    h_value: object = None

    def to_composite(self):
        blocks = []
        for k, b in enumerate(self.blocks):
            L = np.array(b.L, dtype=float, ndmin=2)
            grad = b.lstar_grad if b.lstar_grad is not None else zero_forward(L.shape[0])
            blocks.append(Block(r=b.r, B=ResolventOp.from_function(b.g), Dinv=grad, L=L))
        return CompositeProblem(z=self.z, A=ResolventOp.from_function(self.f),
                                C=self.h_grad, blocks=blocks)


def solve_convex(p, config=None, x0=None, v0=None, reference=None):
    """Primal-dual FBF for :class:`ConvexProblem`.

    Runs :func:`solve_primal_dual` on the subdifferential form: prox of
    ``f``, forward ``grad h``, prox of ``g_k*`` through the Moreau identity
    and forward ``grad l_k*``.
    """
    return solve_primal_dual(p.to_composite(), config, x0, v0, reference)


def primal_objective(p, x):
    """Objective of :class:`ConvexProblem` when every ``l_k`` is ``indicator {0}``."""
    x = as_vector(x, p.f.dim, "x")
    if any(b.lstar_grad is not None for b in p.blocks):
        raise NotImplementedError("infimal-convolution values are not evaluated")
    val = p.f(x) - float(x @ np.asarray(p.z, dtype=float))
    for b in p.blocks:
        L = np.array(b.L, dtype=float, ndmin=2)
        val += b.g(L @ x - np.asarray(b.r, dtype=float))
    if p.h_value is not None:
        val += p.h_value(x)
    return float(val)


def _graph_gap(A, point, element):
    # sqrt(2)|p - J_A(p + u)| bounds the distance from (p, u) to gra A:
    # (J_A(p + u), p + u - J_A(p + u)) lies on the graph. Unlike the
    # distance from u to the set A p it is continuous in p.
    return math.sqrt(2.0) * float(np.linalg.norm(point - A.evaluate(1.0, point + element)))


def inclusion_residuals(p, x, vs):
    """Graph residuals certifying that ``(x, v)`` is a primal-dual solution.

    The inclusions are ``z - sum_i L_i^T v_i - C x in A x`` and, for each
    block, ``v_i in B_i(L_i x - D_i^{-1} v_i - r_i)``. Each is measured by an
    upper bound on the distance from the pair (point, element) to the
    operator's graph, which vanishes exactly when the inclusion holds.
    """
    x = as_vector(x, p.dim, "x")
    u = p.z - _primal_forward(p, x, vs)
    primal = _graph_gap(p.A, x, u)
    duals = []
    for b, v in zip(p.blocks, vs):
        w = b.L @ x - b.Dinv.evaluate(v) - b.r
        duals.append(_graph_gap(b.B, w, np.asarray(v, dtype=float)))
    return primal, duals


def solve_variational_inequality(f, B, config=None, x0=None, reference=None):
    """Find ``x`` with ``<x - y, B x> + f(x) <= f(y)`` for all ``y``.

    This is FBF with ``A = df``, the resolvent being the prox of ``f``.
    """
    trace = run(ResolventOp.from_function(f), B, B.beta, config, x0, reference)
    return trace, trace.final.copy()


def vi_gap(f, B, x, ys):
    """``max_y <x - y, B x> + f(x) - f(y)`` over the rows of ``ys``; <= 0 at a solution."""
    x = as_vector(x, B.dim, "x")
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    bx = B.evaluate(x)
    fx = f(x)
    gaps = [(x - y) @ bx + fx - f(y) for y in ys]
    return float(max(gaps))
