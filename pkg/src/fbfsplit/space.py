"""Finite-dimensional Hilbert-space arithmetic.

Vectors are plain one-dimensional ``float64`` numpy arrays; :func:`as_vector`
is the single validation gate. Metrics are self-adjoint matrices bounded
below by ``alpha * Id`` and carry the norms ``sqrt(<Wx, x>)`` and
``sqrt(<W^{-1}x, x>)`` used by the variable-metric iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .exceptions import DimensionError, MetricError
from .report import Report

SYMMETRY_RTOL = 1e-12
SPECTRAL_TOL = 1e-10
EIGEN_DIM_LIMIT = 512
CONDITION_LIMIT = 1e12

__all__ = [
    "as_vector",
    "Metric",
    "MetricSequence",
    "ProductPoint",
    "metric_norm",
    "inverse_metric_norm",
    "check_metric_sequence",
    "pack",
    "unpack",
]


def as_vector(x, dim=None, name="x"):
    """Return `x` as a finite 1-D float array, optionally checking its length."""
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {v.shape}")
    if v.size == 0:
        raise DimensionError(f"{name} must have dim >= 1")
    if dim is not None and v.size != dim:
        raise DimensionError(f"{name} has dim {v.size}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def _is_psd(m, shift):
    try:
        np.linalg.cholesky(m - shift * np.eye(m.shape[0]))
    except np.linalg.LinAlgError:
        return False
    return True


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Metric:
    """Self-adjoint operator ``W`` with ``W >= alpha * Id``.

    Validation happens at construction: symmetry to relative tolerance
    ``1e-12`` and the spectral lower bound by eigendecomposition (dimension
    up to 512). Beyond that, randomized Rayleigh-quotient probing screens
    for indefiniteness and a Cholesky factorization of ``W - alpha Id``
    certifies the bound.

    Parameters
    ----------
    matrix : array_like, shape (d, d)
    alpha : float, optional
        Declared lower spectral bound. Defaults to the smallest eigenvalue,
        or above dimension 512 to a certified bound within a factor 2 of it.
    """

    matrix: np.ndarray
    alpha: float | None = None
    _eigvals: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise DimensionError(f"metric must be a non-empty square matrix, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise MetricError("metric has non-finite entries")
        scale = max(np.max(np.abs(m)), np.finfo(float).tiny)
        asym = np.max(np.abs(m - m.T))
        if asym > SYMMETRY_RTOL * scale:
            raise MetricError(f"metric is not symmetric (max |W - W^T| = {asym:.3e})")
        m = 0.5 * (m + m.T)
        d = m.shape[0]
        if d <= EIGEN_DIM_LIMIT:
            eig = np.linalg.eigvalsh(m)
            lo = eig[0]
        else:
            eig = None
            rng = np.random.default_rng(0)
            probes = rng.standard_normal((d, 64))
            probes /= np.linalg.norm(probes, axis=0)
            lo = float(np.min(np.einsum("ij,ij->j", probes, m @ probes)))
        if eig is None and lo <= 0:
            raise MetricError(f"metric is not positive definite (Rayleigh quotient {lo:.3e})")
        if eig is None and self.alpha is None:
            # probes overestimate the bottom of the spectrum; halve until
            # a Cholesky factorization certifies W - alpha Id >= 0
            alpha = float(lo)
            for _ in range(64):
                if _is_psd(m, alpha):
                    break
                alpha *= 0.5
            else:
                raise MetricError("could not certify a positive lower spectral bound")
        else:
            alpha = float(lo) if self.alpha is None else float(self.alpha)
        if not alpha > 0:
            raise MetricError(f"metric lower bound must be positive, got {alpha:.3e}")
        tol = SPECTRAL_TOL * max(1.0, alpha)
        if lo < alpha - tol or (eig is None and not _is_psd(m, alpha - tol)):
            raise MetricError(
                f"smallest eigenvalue {lo:.6e} is below declared alpha {alpha:.6e}")
        object.__setattr__(self, "matrix", _frozen(m))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "_eigvals", None if eig is None else _frozen(eig))

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim), alpha=1.0)

    @classmethod
    def scalar(cls, lam, dim):
        return cls(lam * np.eye(dim), alpha=lam)

    @classmethod
    def diagonal(cls, diag, alpha=None):
        diag = as_vector(diag, name="diag")
        return cls(np.diag(diag), alpha=alpha)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @cached_property
    def norm(self):
        """Operator norm (largest eigenvalue)."""
        if self._eigvals is not None:
            return float(self._eigvals[-1])
        return float(np.linalg.norm(self.matrix, 2))

    @cached_property
    def diag(self):
        """Diagonal entries when the metric is diagonal, else ``None``."""
        d = np.diag(self.matrix)
        if np.array_equal(self.matrix, np.diag(d)):
            return _frozen(d)
        return None

    @property
    def is_diagonal(self):
        return self.diag is not None

    @cached_property
    def scalar_value(self):
        """``lam`` when the metric equals ``lam * Id`` exactly, else ``None``."""
        d = self.diag
        if d is not None and np.all(d == d[0]):
            return float(d[0])
        return None

    @cached_property
    def condition(self):
        if self._eigvals is not None:
            return float(self._eigvals[-1] / self._eigvals[0])
        return float(np.linalg.cond(self.matrix))

    def apply(self, x):
        return self.matrix @ x

    def solve(self, x):
        """Return ``W^{-1} x`` through a linear solve."""
        if self.condition > CONDITION_LIMIT:
            raise MetricError(
                f"metric is singular to working precision (condition ~ {self.condition:.3e})",
                condition=self.condition)
        if self.diag is not None:
            return x / self.diag
        return np.linalg.solve(self.matrix, x)


def _check_dims(W, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != W.dim:
        raise DimensionError(f"vector of shape {x.shape} does not match metric of dim {W.dim}")
    return x


def metric_norm(W, x):
    """``sqrt(<W x, x>)``."""
    x = _check_dims(W, x)
    return float(np.sqrt(max(float(x @ W.apply(x)), 0.0)))


def inverse_metric_norm(W, x):
    """``sqrt(<W^{-1} x, x>)``, computed by a linear solve."""
    x = _check_dims(W, x)
    return float(np.sqrt(max(float(x @ W.solve(x)), 0.0)))


@dataclass(frozen=True, eq=False)
class MetricSequence:
    """A sequence ``(U_n)`` of metrics with summable growth.

    The intended contract is ``(1 + eta_n) <x, U_{n+1} x> >= <x, U_n x>
    >= alpha |x|^2`` and ``|U_n| <= mu``; :func:`check_metric_sequence`
    tests it on samples.

    Parameters
    ----------
    metric : callable
        ``n -> Metric``.
    eta : callable
        ``n -> eta_n >= 0``.
    mu, alpha : float
        Declared uniform upper and lower bounds.
    eta_sum : float, optional
        Closed form of ``sum_n eta_n`` when known.
    """

    metric: Callable[[int], Metric]
    eta: Callable[[int], float]
    mu: float
    alpha: float
    eta_sum: float | None = None

    def __call__(self, n):
        return self.metric(n)

    @property
    def dim(self):
        return self.metric(0).dim

    @classmethod
    def constant(cls, W):
        return cls(metric=lambda n: W, eta=lambda n: 0.0, mu=W.norm,
                   alpha=W.alpha, eta_sum=0.0)

    @classmethod
    def identity(cls, dim):
        return cls.constant(Metric.identity(dim))

    @classmethod
    def geometric(cls, diag, c=1.0, rho=0.5):
        """``U_n = (1 + c rho^n) diag(d)`` with ``eta_n = c (1 - rho) rho^n``.

        The growth condition reduces to ``(1 + c(1-rho)rho^n)(1 + c rho^{n+1})
        >= 1 + c rho^n``, which holds because the cross term is nonnegative.
        """
        d = as_vector(diag, name="diag")
        if not (0 < rho < 1) or c < 0 or np.any(d <= 0):
            raise ValueError("need 0 < rho < 1, c >= 0 and positive diagonal")
        base = np.diag(d)
        lo = float(np.min(d))

        def metric(n):
            s = 1.0 + c * rho ** n
            return Metric(s * base, alpha=s * lo)

        return cls(metric=metric, eta=lambda n: c * (1.0 - rho) * rho ** n,
                   mu=(1.0 + c) * float(np.max(d)), alpha=lo, eta_sum=c)


def check_metric_sequence(seq, horizon, samples, rng_seed=0, tol=SPECTRAL_TOL):
    """Sample-based test of the growth and boundedness conditions on ``U_n``.

    For each ``n < horizon`` the report records the worst margin of
    ``(1+eta_n)<x,U_{n+1}x> - <x,U_n x>``, of ``<x,U_n x> - alpha`` and of
    ``mu - |U_n|`` over ``samples`` random unit vectors. Passes iff every
    margin is at least ``-tol``.
    """
    if horizon < 1 or samples < 1:
        raise ValueError("horizon and samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    dim = seq.dim
    growth, lower, bound = [], [], []
    current = seq(0)
    for n in range(horizon):
        nxt = seq(n + 1)
        xs = rng.standard_normal((samples, dim))
        xs /= np.linalg.norm(xs, axis=1, keepdims=True)
        qn = np.einsum("ij,ij->i", xs, xs @ current.matrix)
        qn1 = np.einsum("ij,ij->i", xs, xs @ nxt.matrix)
        growth.append(float(np.min((1.0 + seq.eta(n)) * qn1 - qn)))
        lower.append(float(np.min(qn - seq.alpha)))
        bound.append(float(seq.mu - current.norm))
        current = nxt
    growth, lower, bound = map(np.array, (growth, lower, bound))
    margins = np.minimum(np.minimum(growth, lower), bound)
    worst = float(np.min(margins))
    eta_partial = float(sum(seq.eta(n) for n in range(horizon)))
    eta_total = seq.eta_sum if seq.eta_sum is not None else eta_partial
    passed = worst >= -tol and np.isfinite(eta_total)
    return Report(
        check="metric_sequence",
        passed=bool(passed),
        worst_margin=worst,
        violation_rate=float(np.mean(margins < -tol)),
        details={
            "growth_margin": growth,
            "lower_bound_margin": lower,
            "norm_bound_margin": bound,
            "eta_partial_sum": eta_partial,
            "eta_total": eta_total,
        },
    )


@dataclass(frozen=True, eq=False)
class ProductPoint:
    """Point ``(x, v_1, ..., v_m)`` of ``H + G_1 + ... + G_m``."""

    primal: np.ndarray
    duals: tuple

    @property
    def dims(self):
        return (self.primal.size,) + tuple(v.size for v in self.duals)

    @property
    def norm(self):
        return float(np.sqrt(self.primal @ self.primal + sum(v @ v for v in self.duals)))

    def to_array(self):
        return np.concatenate((self.primal,) + tuple(self.duals))

    @classmethod
    def from_array(cls, arr, dims):
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 1 or arr.size != sum(dims):
            raise DimensionError(f"array of size {arr.size} does not split into {tuple(dims)}")
        parts = np.split(arr, np.cumsum(dims)[:-1])
        return cls(parts[0].copy(), tuple(p.copy() for p in parts[1:]))


def pack(primal, duals: Sequence):
    """Bundle a primal vector and dual vectors into a :class:`ProductPoint`."""
    x = as_vector(primal, name="primal")
    vs = tuple(as_vector(v, name=f"duals[{i}]") for i, v in enumerate(duals))
    return ProductPoint(x.copy(), tuple(v.copy() for v in vs))


def unpack(p):
    return p.primal.copy(), [v.copy() for v in p.duals]
