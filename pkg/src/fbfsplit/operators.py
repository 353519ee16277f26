"""Monotone operators, Lipschitz maps and convex functions.

A set-valued maximally monotone operator is only ever touched through its
resolvent ``J_{gamma A} = (Id + gamma A)^{-1}``; a single-valued monotone map
through forward evaluation; a convex function through its proximity
operator. The second half of the module is a small library of operators
with closed-form resolvents, addressable by name through :data:`REGISTRY`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import DimensionError
from .report import Report

__all__ = [
    "ConvexFn",
    "ResolventOp",
    "ForwardOp",
    "resolvent",
    "inverse_resolvent",
    "forward",
    "conjugate_prox",
    "certify_monotone_lipschitz",
    "certify_firmly_nonexpansive",
    "REGISTRY",
    "make_resolvent",
    "make_forward",
    "make_function",
    "soft_threshold",
]


@dataclass(frozen=True, eq=False)
class ConvexFn:
    """Proper lsc convex function given by its proximity operator.

    ``prox(gamma, x)`` returns the minimizer of ``gamma f + 1/2 |. - x|^2``.
    When ``separable`` is true, ``gamma`` may be an array of per-coordinate
    steps, which is what the diagonal-metric resolvent relies on.
    ``subdiff_dist(p, u)`` is the distance from ``u`` to ``df(p)`` and is
    used only for inclusion checks.
    """

    name: str
    dim: int
    prox: Callable
    value: Callable | None = None
    conj_prox: Callable | None = None
    subdiff_dist: Callable | None = None
    separable: bool = True

    def __call__(self, x):
        if self.value is None:
            raise NotImplementedError(f"{self.name} has no registered value")
        return self.value(x)


@dataclass(frozen=True, eq=False)
class ResolventOp:
    """Maximally monotone ``A`` exposed through ``(gamma, x) -> J_{gamma A} x``.

    ``fn`` is set when ``A`` is the subdifferential of a registered
    function, ``inverse`` when a resolvent of ``A^{-1}`` is known in closed
    form, and ``graph_dist(p, u)`` returns the distance from ``u`` to
    ``A p``.
    """

    name: str
    dim: int
    evaluate: Callable
    fn: ConvexFn | None = None
    inverse: Callable | None = None
    graph_dist: Callable | None = None

    @classmethod
    def from_function(cls, f):
        return cls(name=f.name, dim=f.dim, evaluate=f.prox, fn=f,
                   inverse=f.conj_prox, graph_dist=f.subdiff_dist)


@dataclass(frozen=True, eq=False)
class ForwardOp:
    """Single-valued monotone map with Lipschitz constant ``beta``."""

    name: str
    dim: int
    evaluate: Callable
    beta: float

    def __call__(self, x):
        return self.evaluate(x)


def _positive_step(gamma):
    g = np.asarray(gamma, dtype=float)
    if not np.all(g > 0):
        raise ValueError(f"step size must be positive, got {gamma!r}")


def _same_dim(op, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != op.dim:
        raise DimensionError(f"{op.name} acts on dim {op.dim}, got vector of shape {x.shape}")
    return x


def resolvent(A, gamma, x):
    """``J_{gamma A}(x)``."""
    _positive_step(gamma)
    return A.evaluate(gamma, _same_dim(A, x))


def inverse_resolvent(A, gamma, x):
    """``J_{gamma A^{-1}}(x) = x - gamma J_{A/gamma}(x/gamma)``."""
    _positive_step(gamma)
    x = _same_dim(A, x)
    return x - gamma * A.evaluate(1.0 / gamma, x / gamma)


def conjugate_prox(f, gamma, x):
    """``prox_{gamma f*}(x)`` via the Moreau decomposition."""
    _positive_step(gamma)
    return x - gamma * f.prox(1.0 / gamma, x / gamma)


def forward(B, x):
    return B.evaluate(_same_dim(B, x))


ROUNDING = 64 * np.finfo(float).eps
LIP_RTOL = 1e-10


def _sample_points(rng, dim, samples):
    # mixed scales so both local and global behaviour get probed
    scales = np.geomspace(1e-2, 1e2, samples)
    rng.shuffle(scales)
    return rng.standard_normal((samples, dim)) * scales[:, None]


def certify_monotone_lipschitz(B, samples=100, rng_seed=0):
    """Falsification test of monotonicity and the declared Lipschitz constant.

    Evaluates ``B`` at ``samples`` random points and inspects every pair.
    The monotonicity margin is ``<x-y, Bx-By> / |x-y|^2``; the Lipschitz
    ratio is ``|Bx-By| / |x-y|``. Passes iff the worst margin is at least
    ``-1e-10`` and every ratio is at most ``beta * (1 + 1e-10)`` plus the
    rounding allowance ``64 eps (|Bx| + |By|) / |x-y|``.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(rng_seed)
    pts = _sample_points(rng, B.dim, samples)
    vals = np.array([B.evaluate(p) for p in pts])
    i, j = np.triu_indices(samples, k=1)
    dx = pts[i] - pts[j]
    du = vals[i] - vals[j]
    nx2 = np.einsum("ij,ij->i", dx, dx)
    keep = nx2 > 0
    dx, du, nx2 = dx[keep], du[keep], nx2[keep]
    mono = np.einsum("ij,ij->i", dx, du) / nx2
    nx = np.sqrt(nx2)
    ratio = np.sqrt(np.einsum("ij,ij->i", du, du)) / nx
    # rounding in Bx - By when both values are large compared to their difference
    mag = np.linalg.norm(vals, axis=1)
    rounding = ROUNDING * (mag[i] + mag[j])[keep] / nx
    lip_margin = B.beta * (1 + LIP_RTOL) + rounding - ratio
    worst_mono = float(np.min(mono))
    worst_ratio = float(np.max(ratio))
    bad = (mono < -1e-10) | (lip_margin < 0)
    return Report(
        check="monotone_lipschitz",
        passed=bool(worst_mono >= -1e-10 and np.all(lip_margin >= 0)),
        worst_margin=min(worst_mono, float(np.min(lip_margin))),
        violation_rate=float(np.mean(bad)),
        details={"operator": B.name, "beta": B.beta,
                 "worst_monotonicity": worst_mono, "worst_ratio": worst_ratio,
                 "pairs": int(keep.sum())},
    )


def certify_firmly_nonexpansive(A, samples=100, rng_seed=0, gamma=1.0):
    """Check ``|Jx - Jy|^2 <= <x - y, Jx - Jy>`` on sampled pairs."""
    rng = np.random.default_rng(rng_seed)
    pts = _sample_points(rng, A.dim, samples)
    vals = np.array([A.evaluate(gamma, p) for p in pts])
    i, j = np.triu_indices(samples, k=1)
    dx, dj = pts[i] - pts[j], vals[i] - vals[j]
    slack = np.einsum("ij,ij->i", dx, dj) - np.einsum("ij,ij->i", dj, dj)
    scale = np.maximum(1.0, np.einsum("ij,ij->i", dx, dx))
    margin = slack / scale
    return Report(check="firmly_nonexpansive", passed=bool(np.min(margin) >= -1e-10),
                  worst_margin=float(np.min(margin)),
                  violation_rate=float(np.mean(margin < -1e-10)),
                  details={"operator": A.name, "gamma": gamma})


# ---------------------------------------------------------------------------
# library
# ---------------------------------------------------------------------------

def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _l1_dist(p, u, w):
    # distance from u to w * d|.|_1(p), coordinatewise
    on = p != 0
    r = np.where(on, np.abs(u - w * np.sign(p)), np.maximum(np.abs(u) - w, 0.0))
    return float(np.linalg.norm(r))


def _as_param(v, dim, name):
    a = np.broadcast_to(np.asarray(v, dtype=float), (dim,)).copy()
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


def zero_function(dim):
    return ConvexFn(
        name="zero", dim=dim,
        prox=lambda g, x: np.array(x, dtype=float),
        value=lambda x: 0.0,
        conj_prox=lambda g, x: np.zeros_like(x, dtype=float),
        subdiff_dist=lambda p, u: float(np.linalg.norm(u)),
    )


def indicator_zero(dim):
    """Indicator of ``{0}``; its conjugate is the zero function."""
    return ConvexFn(
        name="indicator_zero", dim=dim,
        prox=lambda g, x: np.zeros_like(x, dtype=float),
        value=lambda x: 0.0 if not np.any(x) else np.inf,
        conj_prox=lambda g, x: np.array(x, dtype=float),
        subdiff_dist=lambda p, u: 0.0 if not np.any(p) else np.inf,
    )


def l1_norm(dim, weight=1.0):
    w = float(weight)
    if w < 0:
        raise ValueError("weight must be nonnegative")
    return ConvexFn(
        name="l1", dim=dim,
        prox=lambda g, x: soft_threshold(x, g * w),
        value=lambda x: w * float(np.sum(np.abs(x))),
        conj_prox=lambda g, x: np.clip(x, -w, w),
        subdiff_dist=lambda p, u: _l1_dist(p, u, w),
    )


def elastic_net(dim, weight=1.0):
    """``w |x|_1 + 1/2 |x|^2``, strongly (hence uniformly) convex."""
    w = float(weight)

    def conj_prox(g, x):
        big = np.abs(x) > w
        return np.where(big, np.sign(x) * (np.abs(x) + g * w) / (1.0 + g), x)

    return ConvexFn(
        name="elastic_net", dim=dim,
        prox=lambda g, x: soft_threshold(x, g * w) / (1.0 + g),
        value=lambda x: w * float(np.sum(np.abs(x))) + 0.5 * float(x @ x),
        conj_prox=conj_prox,
        subdiff_dist=lambda p, u: _l1_dist(p, u - p, w),
    )


def box_indicator(dim, lo=-1.0, hi=1.0):
    lo = _as_param(lo, dim, "lo")
    hi = _as_param(hi, dim, "hi")
    if np.any(lo > hi):
        raise ValueError("box needs lo <= hi")

    def value(x):
        return 0.0 if np.all((x >= lo) & (x <= hi)) else np.inf

    def normal_cone_dist(p, u):
        if np.any((p < lo) | (p > hi)):
            return np.inf
        at_lo, at_hi = p == lo, p == hi
        r = np.where(at_lo & at_hi, 0.0,
                     np.where(at_hi, np.minimum(u, 0.0),
                              np.where(at_lo, np.maximum(u, 0.0), u)))
        return float(np.linalg.norm(r))

    return ConvexFn(
        name="box_projection", dim=dim,
        prox=lambda g, x: np.clip(x, lo, hi),
        value=value,
        conj_prox=lambda g, x: x - g * np.clip(x / g, lo, hi),
        subdiff_dist=normal_cone_dist,
    )


def quadratic(dim, center=0.0):
    """``1/2 |x - c|^2``."""
    c = _as_param(center, dim, "center")
    return ConvexFn(
        name="quadratic", dim=dim,
        prox=lambda g, x: (x + g * c) / (1.0 + g),
        value=lambda x: 0.5 * float((x - c) @ (x - c)),
        conj_prox=lambda g, x: (x - g * c) / (1.0 + g),
        subdiff_dist=lambda p, u: float(np.linalg.norm(u - (p - c))),
    )


def scaled_identity_function(dim, lam=1.0):
    """``lam/2 |x|^2``; its subdifferential is ``lam Id``."""
    lam = float(lam)
    if lam <= 0:
        raise ValueError("lam must be positive")
    return ConvexFn(
        name="scaled_identity", dim=dim,
        prox=lambda g, x: x / (1.0 + g * lam),
        value=lambda x: 0.5 * lam * float(x @ x),
        conj_prox=lambda g, x: lam * x / (lam + g),
        subdiff_dist=lambda p, u: float(np.linalg.norm(u - lam * p)),
    )


def _linear_resolvent(name, M, b):
    dim = M.shape[0]
    eye = np.eye(dim)

    def evaluate(g, x):
        if np.ndim(g):
            raise ValueError(f"{name} resolvent needs a scalar step")
        return np.linalg.solve(eye + g * M, x - g * b)

    return ResolventOp(name=name, dim=dim, evaluate=evaluate,
                       graph_dist=lambda p, u: float(np.linalg.norm(u - (M @ p + b))))


def _check_monotone_matrix(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"matrix must be square, got shape {M.shape}")
    lo = np.linalg.eigvalsh(0.5 * (M + M.T))[0]
    if lo < -1e-10 * max(1.0, np.max(np.abs(M))):
        raise ValueError(f"M + M^T is not positive semidefinite (min eig {lo:.3e})")
    return M


def affine_forward(M, b=0.0, name="affine"):
    M = _check_monotone_matrix(M)
    b = _as_param(b, M.shape[0], "b")
    beta = float(np.linalg.norm(M, 2))
    return ForwardOp(name=name, dim=M.shape[0], evaluate=lambda x: M @ x + b, beta=beta)


def affine_resolvent(M, b=0.0, name="affine"):
    M = _check_monotone_matrix(M)
    return _linear_resolvent(name, M, _as_param(b, M.shape[0], "b"))


def _check_skew(S):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError(f"matrix must be square, got shape {S.shape}")
    if np.max(np.abs(S + S.T)) > 1e-12 * max(1.0, np.max(np.abs(S))):
        raise ValueError("matrix is not skew-symmetric")
    return S


def rotation_matrix(dim=2):
    """Block-diagonal ``[[0, 1], [-1, 0]]``; ``dim`` must be even."""
    if dim % 2:
        raise DimensionError("skew_rotation needs an even dimension")
    S = np.zeros((dim, dim))
    for k in range(0, dim, 2):
        S[k, k + 1], S[k + 1, k] = 1.0, -1.0
    return S


def zero_forward(dim):
    return ForwardOp(name="zero", dim=dim, evaluate=lambda x: np.zeros_like(x, dtype=float),
                     beta=0.0)


def scaled_identity_forward(dim, lam=1.0):
    lam = float(lam)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    return ForwardOp(name="scaled_identity", dim=dim, evaluate=lambda x: lam * x, beta=lam)


def quadratic_gradient(dim, center=0.0):
    c = _as_param(center, dim, "center")
    return ForwardOp(name="quadratic", dim=dim, evaluate=lambda x: x - c, beta=1.0)


@dataclass(frozen=True)
class LibraryEntry:
    """Factories registered under one name; any of them may be absent."""

    resolvent: Callable | None = None
    forward: Callable | None = None
    function: Callable | None = None


def _from_fn(factory):
    return lambda dim, **kw: ResolventOp.from_function(factory(dim, **kw))


def _skew_rot_resolvent(dim):
    return _linear_resolvent("skew_rotation", rotation_matrix(dim), np.zeros(dim))


def _skew_rot_forward(dim):
    S = rotation_matrix(dim)
    return ForwardOp(name="skew_rotation", dim=dim, evaluate=lambda x: S @ x, beta=1.0)


def _skew_forward(dim, S):
    S = _check_skew(S)
    if S.shape[0] != dim:
        raise DimensionError(f"skew matrix has dim {S.shape[0]}, expected {dim}")
    return ForwardOp(name="skew", dim=dim, evaluate=lambda x: S @ x,
                     beta=float(np.linalg.norm(S, 2)))


def _skew_resolvent(dim, S):
    S = _check_skew(S)
    if S.shape[0] != dim:
        raise DimensionError(f"skew matrix has dim {S.shape[0]}, expected {dim}")
    return _linear_resolvent("skew", S, np.zeros(dim))


def _affine_checked(factory):
    def make(dim, M, b=0.0):
        op = factory(M, b)
        if op.dim != dim:
            raise DimensionError(f"matrix has dim {op.dim}, expected {dim}")
        return op
    return make


REGISTRY = {
    "zero": LibraryEntry(_from_fn(zero_function), zero_forward, zero_function),
    "scaled_identity": LibraryEntry(_from_fn(scaled_identity_function),
                                    scaled_identity_forward, scaled_identity_function),
    "affine": LibraryEntry(_affine_checked(affine_resolvent), _affine_checked(affine_forward)),
    "skew": LibraryEntry(_skew_resolvent, _skew_forward),
    "skew_rotation": LibraryEntry(_skew_rot_resolvent, _skew_rot_forward),
    "l1": LibraryEntry(_from_fn(l1_norm), None, l1_norm),
    "box_projection": LibraryEntry(_from_fn(box_indicator), None, box_indicator),
    "quadratic": LibraryEntry(_from_fn(quadratic), quadratic_gradient, quadratic),
    "indicator_zero": LibraryEntry(_from_fn(indicator_zero), None, indicator_zero),
    "elastic_net": LibraryEntry(_from_fn(elastic_net), None, elastic_net),
}


def _lookup(name, role):
    if name not in REGISTRY:
        raise KeyError(f"unknown operator {name!r}; registered: {sorted(REGISTRY)}")
    factory = getattr(REGISTRY[name], role)
    if factory is None:
        roles = [r for r in ("resolvent", "forward", "function") if getattr(REGISTRY[name], r)]
        raise KeyError(f"operator {name!r} has no {role} form (available: {roles})")
    return factory


def make_resolvent(name, dim, **params):
    return _lookup(name, "resolvent")(dim, **params)


def make_forward(name, dim, **params):
    return _lookup(name, "forward")(dim, **params)


def make_function(name, dim, **params):
    return _lookup(name, "function")(dim, **params)
