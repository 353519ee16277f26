"""Noise schedules for the stochastic error sequences ``(a_n, b_n, c_n)``.

Errors are drawn independently of the iterate path, so their conditional
second moments given the past equal the unconditional ones and are known in
closed form. All schedules are geometric, hence summable whenever
``rho < 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NoiseSchedule",
    "KINDS",
    "make_generator",
    "sample_errors",
    "conditional_moment",
    "verify_summability",
]

KINDS = ("zero", "gaussian_geometric", "bounded_uniform_geometric")
SEED_MASK = (1 << 64) - 1


def make_generator(seed):
    """Counter-based Philox generator keyed directly by a 64-bit seed."""
    seed = int(seed)
    if not 0 <= seed <= SEED_MASK:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(key=seed))


@dataclass(frozen=True)
class NoiseSchedule:
    """Error sequence with entrywise scale ``sigma * rho**n``.

    ``gaussian_geometric`` draws standard normal entries, and
    ``bounded_uniform_geometric`` uniform entries on ``[-1, 1]``, both scaled
    by ``sigma * rho**n``. ``zero`` yields exact zeros and consumes no
    random numbers.
    """

    kind: str = "zero"
    dim: int = 1
    sigma: float = 0.0
    rho: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {KINDS}")
        if int(self.dim) < 1:
            raise ValueError("dim must be >= 1")
        if self.kind != "zero":
            if not self.sigma > 0:
                raise ValueError("sigma must be positive")
            if not self.rho > 0:
                raise ValueError("rho must be positive")

    @classmethod
    def zero(cls, dim):
        return cls("zero", dim)

    @classmethod
    def gaussian(cls, dim, sigma, rho, seed=0):
        return cls("gaussian_geometric", dim, sigma, rho, seed)

    @classmethod
    def uniform(cls, dim, sigma, rho, seed=0):
        return cls("bounded_uniform_geometric", dim, sigma, rho, seed)

    @property
    def is_zero(self):
        return self.kind == "zero"

    def with_dim(self, dim):
        return NoiseSchedule(self.kind, dim, self.sigma, self.rho, self.seed)

    def scale(self, n):
        if self.is_zero:
            return 0.0
        return self.sigma * self.rho ** n

    def moment(self, n):
        """``sqrt(E |e_n|^2)``."""
        s = self.scale(n)
        if self.kind == "gaussian_geometric":
            return s * math.sqrt(self.dim)
        if self.kind == "bounded_uniform_geometric":
            return s * math.sqrt(self.dim / 3.0)
        return 0.0

    def sample(self, n, rng):
        s = self.scale(n)
        if s == 0.0:
            return np.zeros(self.dim)
        if self.kind == "gaussian_geometric":
            return s * rng.standard_normal(self.dim)
        return s * rng.uniform(-1.0, 1.0, self.dim)


def sample_errors(schedules, n, rng):
    """Draw ``(a_n, b_n, c_n)``, in that order, from one generator."""
    if n < 0:
        raise ValueError("n must be >= 0")
    sa, sb, sc = schedules
    return sa.sample(n, rng), sb.sample(n, rng), sc.sample(n, rng)


def conditional_moment(s, n):
    if n < 0:
        raise ValueError("n must be >= 0")
    return s.moment(n)


def verify_summability(s, tol=1e-12):
    """Closed-form ``sum_n sqrt(E |e_n|^2)`` and whether it is finite.

    The closed form ``moment(0) / (1 - rho)`` is cross-checked against the
    partial sum truncated once terms fall below ``tol``.
    """
    if s.is_zero:
        return 0.0, True
    if s.rho >= 1:
        return math.inf, False
    total = s.moment(0) / (1.0 - s.rho)
    partial, n = 0.0, 0
    while True:
        term = s.moment(n)
        partial += term
        if term < tol * (1.0 - s.rho):
            break
        n += 1
    if abs(partial - total) > max(tol, 1e-9 * total):
        raise ArithmeticError(f"partial sum {partial} disagrees with closed form {total}")
    return total, True
