"""Trace-level checks of the convergence machinery.

The convergence argument rests on three facts that can be observed on a
finite trajectory:

* an almost-supermartingale inequality ``z_{n+1} <= (1+t_n) z_n + zeta_n - xi_n``
  (checked pathwise, which is exact for deterministic runs);
* quasi-Fejer monotonicity ``d_{n+1} <= (1+eta_n) d_n + eps_n`` of the
  distances to a solution;
* summability of the squared residuals ``|x_n - p_n|^2`` and ``|y_n - q_n|^2``.

Conditional expectations are not observable from one path. For noisy runs
the checks report violation frequencies; pass rates across seeds are the
empirical surrogate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .report import Report

__all__ = [
    "SupermartingaleTrace",
    "robbins_siegmund_check",
    "fbf_supermartingale",
    "quasi_fejer_check",
    "epsilon_bound",
    "summability_report",
    "convergence_report",
    "pass_rate",
    "TOL",
    "SUMMABILITY_RATIO",
]

TOL = 1e-10
SUMMABILITY_RATIO = 1e-6


def _seq(v, n, name):
    a = np.zeros(n) if v is None else np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ValueError(f"{name} must be nonnegative and finite")
    return a


@dataclass(frozen=True, eq=False)
class SupermartingaleTrace:
    """Realized sequences for ``z_{n+1} <= (1+t_n) z_n + zeta_n - xi_n``.

    ``t``, ``zeta`` and ``xi`` may be scalars or sequences of the same
    length as ``z``; ``None`` means zero.
    """

    z: np.ndarray
    t: np.ndarray | None = None
    zeta: np.ndarray | None = None
    xi: np.ndarray | None = None

    def __post_init__(self):
        z = _seq(self.z, np.size(self.z), "z")
        n = z.size
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "t", _seq(self.t, n, "t"))
        object.__setattr__(self, "zeta", _seq(self.zeta, n, "zeta"))
        object.__setattr__(self, "xi", _seq(self.xi, n, "xi"))

    @property
    def horizon(self):
        return self.z.size


def _tail(n):
    # index where the last 10% of a length-n sequence starts
    return min(int(math.floor(0.9 * n)), n - 1)


def robbins_siegmund_check(tr, tol=TOL):
    """Pathwise check of the almost-supermartingale inequality.

    Margins ``(1+t_n) z_n + zeta_n - xi_n - z_{n+1}`` must be at least
    ``-tol * max(1, z_n)``. The report also carries the oscillation of
    ``z`` over the last 10% of the horizon (a convergence estimate), the
    last value of ``z`` and the partial sum of ``xi``.
    """
    if tr.horizon < 2:
        raise ValueError("horizon must be >= 2")
    z, t, zeta, xi = tr.z, tr.t, tr.zeta, tr.xi
    margin = (1.0 + t[:-1]) * z[:-1] + zeta[:-1] - xi[:-1] - z[1:]
    slack = tol * np.maximum(1.0, z[:-1])
    bad = margin < -slack
    tail = z[_tail(tr.horizon):]
    return Report(
        check="robbins_siegmund",
        passed=not bool(np.any(bad)),
        worst_margin=float(np.min(margin)),
        violation_rate=float(np.mean(bad)),
        details={
            "z_last": float(z[-1]),
            "z_tail_oscillation": float(np.max(tail) - np.min(tail)),
            "xi_partial_sum": float(np.sum(xi[:-1])),
            "horizon": tr.horizon,
        },
    )


def _distances(trace, target):
    if target is None:
        target = trace.reference
    if target is None:
        raise ValueError("trace has no reference solution; pass a target")
    return trace.distances(target, metric=True)


def fbf_supermartingale(trace, target=None):
    """Instantiate the descent inequality of an exact FBF run.

    ``z_n = |x_n - x*|^2`` in the ``U_n^{-1}`` norm, ``t_n = eta_n``,
    ``zeta_n = 0`` and ``xi_n = mu^{-1} (1 - gamma_n^2 beta^2 mu^2) |x_n - p_n|^2``.
    The inequality holds pathwise only for zero-noise runs.
    """
    d = _distances(trace, target)
    n = len(trace)
    mu, beta = trace.mu, trace.beta
    g = trace.gamma
    xi = np.zeros(n + 1)
    xi[:n] = np.maximum((1.0 - (g * beta * mu) ** 2) / mu, 0.0) * trace.res_primal ** 2
    t = np.zeros(n + 1)
    if trace.eta is not None:
        t[:n] = trace.eta
    return SupermartingaleTrace(z=d ** 2, t=t, xi=xi)


def epsilon_bound(trace, realized=True):
    """Per-step error term ``eps_n`` for the quasi-Fejer inequality.

    Follows the pattern ``sqrt(mu/alpha) (2 (B + A/(beta mu)) + C/(beta mu)
    + A/(beta mu))`` where ``A``, ``B``, ``C`` are the sizes of ``a_n``,
    ``b_n``, ``c_n`` in the norms ``|.|_{U_n}``, ``|.|_{U_n^{-1}}``,
    ``|.|_{U_n}``. With ``realized=True`` the trace's realized error norms
    are used and the inequality holds along the path; otherwise the
    schedules' root-mean-square moments are used (through ``|a|_U <= sqrt(mu)|a|``
    and ``|b|_{U^{-1}} <= |b| / sqrt(alpha)``). When ``beta = 0`` the factor
    ``1/(beta mu)`` is replaced by the step actually taken.
    """
    n = len(trace)
    if not trace.noisy:
        return np.zeros(n)
    mu, alpha, beta = trace.mu, trace.alpha, trace.beta
    if realized:
        A, B, C = trace.err_a, trace.err_b, trace.err_c
    else:
        A = math.sqrt(mu) * trace.moment_a
        B = trace.moment_b / math.sqrt(alpha)
        C = math.sqrt(mu) * trace.moment_c
    inv = np.full(n, 1.0 / (beta * mu)) if beta > 0 else trace.gamma * mu
    return math.sqrt(mu / alpha) * (2.0 * (B + inv * A) + inv * C + inv * A)


def quasi_fejer_check(trace, target=None, eta=None, eps_bound=None, tol=TOL):
    """Check ``d_{n+1} <= (1 + eta_n) d_n + eps_n`` along a trace.

    ``d_n`` is the distance of ``x_n`` to ``target`` in the ``U_n^{-1}``
    norm (plain norm without a metric). ``eta`` defaults to the trace's
    metric growth and ``eps_bound`` to :func:`epsilon_bound` with realized
    errors (zero for exact runs). Passes iff every margin is at least
    ``-tol * max(1, d_n)``.
    """
    d = _distances(trace, target)
    n = len(trace)
    if eta is None:
        eta = trace.eta if trace.eta is not None else np.zeros(n)
    if eps_bound is None:
        eps_bound = epsilon_bound(trace, realized=True)
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (n,))
    eps = np.broadcast_to(np.asarray(eps_bound, dtype=float), (n,))
    margin = (1.0 + eta) * d[:-1] + eps - d[1:]
    bad = margin < -tol * np.maximum(1.0, d[:-1])
    return Report(
        check="quasi_fejer",
        passed=not bool(np.any(bad)),
        worst_margin=float(np.min(margin)) if n else 0.0,
        violation_rate=float(np.mean(bad)) if n else 0.0,
        details={"d_first": float(d[0]), "d_last": float(d[-1]),
                 "violations": int(np.sum(bad)), "noisy": trace.noisy},
    )


def _decade_ratio(sq):
    total = float(np.sum(sq))
    if total == 0.0:
        return 0.0, 0.0
    head = float(np.sum(sq[:int(math.floor(0.9 * sq.size))]))
    return total, (total - head) / total


def summability_report(trace, threshold=SUMMABILITY_RATIO):
    """Partial sums of squared residuals and their last-decade increment ratio.

    ``trace`` is an :class:`IterateTrace` or a plain residual sequence (used
    for both series). The ratio is ``(S_N - S_{floor(0.9 N)}) / S_N``, zero
    when ``S_N = 0``; the check passes when both ratios are below
    ``threshold``.
    """
    if hasattr(trace, "res_primal"):
        r1, r2 = np.asarray(trace.res_primal), np.asarray(trace.res_yq)
    else:
        r1 = r2 = np.asarray(trace, dtype=float)
    if r1.size == 0:
        raise ValueError("trace is empty")
    s1, q1 = _decade_ratio(r1 ** 2)
    s2, q2 = _decade_ratio(r2 ** 2)
    worst = max(q1, q2)
    return Report(
        check="summability",
        passed=bool(worst < threshold),
        worst_margin=float(threshold - worst),
        details={"sum_res_primal_sq": s1, "sum_res_yq_sq": s2,
                 "ratio_res_primal": q1, "ratio_res_yq": q2, "horizon": int(r1.size)},
    )


def convergence_report(trace, target=None, tol=1e-6):
    """Classify norm convergence: final distance, first hit of ``tol``, and whether it stays below."""
    d = _distances(trace, target)
    below = np.nonzero(d <= tol)[0]
    first = int(below[0]) if below.size else None
    stays = first is not None and bool(np.all(d[first:] <= tol))
    return Report(
        check="strong_convergence",
        passed=stays,
        worst_margin=float(tol - d[-1]),
        details={"final_distance": float(d[-1]), "first_hit": first, "stays_below": stays,
                 "tol": tol},
    )


def pass_rate(reports):
    """Fraction of passing reports (the across-seed surrogate for noisy runs)."""
    reports = list(reports)
    if not reports:
        return 0.0
    return sum(bool(r) for r in reports) / len(reports)
