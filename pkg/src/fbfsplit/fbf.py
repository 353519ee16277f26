"""Stochastic forward-backward-forward (Tseng) splitting.

Finds a zero of ``A + B`` where ``A`` is maximally monotone (used through
its resolvent) and ``B`` is monotone and ``beta``-Lipschitz, but not
necessarily cocoercive. One iteration with step ``gamma``, metric ``U`` and
errors ``(a, b, c)`` reads::

    y      = x - gamma U (B x + a)
    p      = J_{gamma U A}(y) + b
    q      = p - gamma U (B p + c)
    x_next = x - y + q

With ``U = Id`` this is the plain method. Convergence needs
``gamma`` in ``[eps, (1 - eps) / (beta mu)]`` with ``mu = sup |U_n|`` and
summable error moments.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .exceptions import (DivergenceError, NonFiniteError, StepSizeError,
                         UnsupportedCombinationError)
from .operators import certify_monotone_lipschitz
from .space import MetricSequence, as_vector
from .stochastic import make_generator, sample_errors

__all__ = [
    "FBFConfig",
    "IterateTrace",
    "step_size_interval",
    "fbf_step",
    "fbf_step_metric",
    "run",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = ("n", "gamma", "res_primal", "res_yq", "dist_ref", "metric_dist",
                 "moment_a", "moment_b", "moment_c")
DIVERGENCE_FACTOR = 1e6


def step_size_interval(beta, mu=1.0, epsilon=0.1):
    """Admissible step sizes ``(eps, (1 - eps) / (beta * mu))``.

    Raises
    ------
    StepSizeError
        If ``epsilon`` is not in ``(0, 1 / (beta * mu + 1))``.
    """
    if beta < 0 or mu <= 0:
        raise StepSizeError(f"need beta >= 0 and mu > 0, got beta={beta}, mu={mu}")
    bound = 1.0 / (beta * mu + 1.0)
    if not 0 < epsilon < bound:
        raise StepSizeError(
            f"epsilon={epsilon} must lie in (0, 1/(beta*mu + 1)) = (0, {bound:.6g})")
    hi = (1.0 - epsilon) / (beta * mu) if beta > 0 else math.inf
    return epsilon, hi


def _check_finite(v, substep):
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"non-finite value produced at substep {substep!r}",
                             substep=substep)


def fbf_step(A, B, x, gamma, errors=None):
    """One plain iteration; returns ``(x_next, y, p, q)``.

    ``errors`` is ``(a, b, c)`` or ``None`` for the exact iteration.
    """
    if errors is None:
        y = x - gamma * B.evaluate(x)
        _check_finite(y, "y")
        p = A.evaluate(gamma, y)
        _check_finite(p, "p")
        q = p - gamma * B.evaluate(p)
    else:
        a, b, c = errors
        y = x - gamma * (B.evaluate(x) + a)
        _check_finite(y, "y")
        p = A.evaluate(gamma, y) + b
        _check_finite(p, "p")
        q = p - gamma * (B.evaluate(p) + c)
    _check_finite(q, "q")
    x_next = x - y + q
    _check_finite(x_next, "x_next")
    return x_next, y, p, q


def _metric_resolvent(A, U, gamma):
    # J_{gamma U A}: a diagonal metric with a separable prox becomes
    # per-coordinate steps; otherwise only scalar metrics are supported.
    fn = A.fn
    if fn is not None and fn.separable and U.diag is not None:
        steps = gamma * U.diag
        return lambda y: fn.prox(steps, y)
    lam = U.scalar_value
    if lam is not None:
        g = gamma * lam
        return lambda y: A.evaluate(g, y)
    raise UnsupportedCombinationError(
        f"cannot evaluate the metric resolvent of {A.name!r}: need a separable prox "
        "with a diagonal metric, or a scalar metric")


def fbf_step_metric(A, B, U, x, gamma, errors=None):
    """One variable-metric iteration with metric ``U``; returns ``(x_next, y, p, q)``."""
    J = _metric_resolvent(A, U, gamma)
    d = U.diag
    apply = (lambda v: d * v) if d is not None else U.apply
    if errors is None:
        y = x - gamma * apply(B.evaluate(x))
        _check_finite(y, "y")
        p = J(y)
        _check_finite(p, "p")
        q = p - gamma * apply(B.evaluate(p))
    else:
        a, b, c = errors
        y = x - gamma * apply(B.evaluate(x) + a)
        _check_finite(y, "y")
        p = J(y) + b
        _check_finite(p, "p")
        q = p - gamma * apply(B.evaluate(p) + c)
    _check_finite(q, "q")
    x_next = x - y + q
    _check_finite(x_next, "x_next")
    return x_next, y, p, q


@dataclass
class FBFConfig:
    """Solver settings.

    Parameters
    ----------
    epsilon : float, optional
        Step-size margin; must satisfy ``0 < eps < 1/(beta mu + 1)``.
        Defaults to ``min(0.1, 0.5 / (beta mu + 1))``.
    gamma : float, sequence or callable, optional
        Constant step, per-iteration sequence, or ``n -> gamma_n``.
        Defaults to the midpoint of the admissible interval.
    max_iters : int
    stop_tol : float
        Stop once ``|x_n - p_n| <= stop_tol``.
    noise : tuple of NoiseSchedule, optional
        Schedules for ``(a_n, b_n, c_n)``; ``None`` runs the exact iteration.
    metric_seq : MetricSequence, optional
        Variable metric; absent means ``U_n = Id``.
    seed : int
        Key of the Philox generator owning this trajectory's errors.
    certify : bool
        Run :func:`certify_monotone_lipschitz` on ``B`` before iterating.
    """

    epsilon: float | None = None
    gamma: float | Sequence[float] | Callable[[int], float] | None = None
    max_iters: int = 1000
    stop_tol: float = 0.0
    noise: tuple | None = None
    metric_seq: MetricSequence | None = None
    seed: int = 0
    certify: bool = True

    @property
    def mu(self):
        return 1.0 if self.metric_seq is None else float(self.metric_seq.mu)

    def resolved_epsilon(self, beta):
        if self.epsilon is not None:
            return self.epsilon
        return min(0.1, 0.5 / (beta * self.mu + 1.0))

    def step_rule(self, beta):
        """Return ``n -> gamma_n`` after validating every emitted step."""
        lo, hi = step_size_interval(beta, self.mu, self.resolved_epsilon(beta))
        g = self.gamma
        if g is None:
            mid = 0.5 * (lo + hi) if math.isfinite(hi) else max(1.0, lo)
            rule = lambda n: mid
        elif callable(g):
            rule = g
        elif np.ndim(g) == 0:
            rule = lambda n, g=float(g): g
        else:
            seq = [float(v) for v in g]
            rule = lambda n: seq[min(n, len(seq) - 1)]

        slack = 1e-15

        def checked(n):
            gn = float(rule(n))
            if not (lo * (1 - slack) <= gn <= hi * (1 + slack)):
                raise StepSizeError(f"gamma_{n} = {gn} outside [{lo}, {hi}]")
            return gn

        return checked

    def schedules(self, dim):
        if self.noise is None:
            return None
        sch = tuple(s.with_dim(dim) if s.dim != dim else s for s in self.noise)
        if len(sch) != 3:
            raise ValueError("noise must hold three schedules (a, b, c)")
        if all(s.is_zero for s in sch):
            return None
        return sch


@dataclass
class IterateTrace:
    """Per-iteration record of a run.

    Step quantities (``gamma``, ``y``, ``p``, ``q``, residuals, error
    moments) have one entry per executed iteration ``n = 0..N-1``; point
    quantities (``x``, ``dist_ref``, ``metric_dist``) have ``N + 1``
    entries, the last being the final iterate.

    ``err_a``, ``err_b``, ``err_c`` hold realized error norms measured in
    ``|.|_{U_n}``, ``|.|_{U_n^{-1}}`` and ``|.|_{U_n}`` respectively; the
    ``moment_*`` arrays hold the schedules' closed-form ``sqrt(E|.|^2)``.
    """

    gamma: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    q: np.ndarray
    res_primal: np.ndarray
    res_yq: np.ndarray
    dist_ref: np.ndarray | None = None
    metric_dist: np.ndarray | None = None
    moment_a: np.ndarray | None = None
    moment_b: np.ndarray | None = None
    moment_c: np.ndarray | None = None
    err_a: np.ndarray | None = None
    err_b: np.ndarray | None = None
    err_c: np.ndarray | None = None
    eta: np.ndarray | None = None
    reference: np.ndarray | None = None
    beta: float | None = None
    mu: float = 1.0
    alpha: float = 1.0
    metric_seq: MetricSequence | None = field(default=None, repr=False)
    dims: tuple | None = None
    status: str = "max_iters"

    def __len__(self):
        return len(self.gamma)

    @property
    def n(self):
        return np.arange(len(self.gamma))

    @property
    def final(self):
        return self.x[-1]

    @property
    def noisy(self):
        return self.err_a is not None

    def distances(self, target, metric=True):
        """``|x_n - target|``, in ``|.|_{U_n^{-1}}`` when a metric is attached."""
        target = np.asarray(target, dtype=float)
        diff = self.x - target
        if metric and self.metric_seq is not None:
            return np.array([math.sqrt(max(float(d @ self.metric_seq(k).solve(d)), 0.0))
                             for k, d in enumerate(diff)])
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))

    def split(self, k=-1):
        """Primal and dual parts of ``x_k`` for product-space runs."""
        if self.dims is None:
            return self.x[k], []
        parts = np.split(self.x[k], np.cumsum(self.dims)[:-1])
        return parts[0], parts[1:]

    def rows(self):
        N = len(self)

        def cell(arr, i):
            if arr is None or i >= len(arr):
                return ""
            return repr(float(arr[i]))

        for i in range(N + 1):
            yield [str(i), cell(self.gamma, i), cell(self.res_primal, i),
                   cell(self.res_yq, i), cell(self.dist_ref, i), cell(self.metric_dist, i),
                   cell(self.moment_a, i), cell(self.moment_b, i), cell(self.moment_c, i)]

    def to_csv(self, fh=None):
        """Write the fixed-schema CSV; returns the text when ``fh`` is None."""
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        w.writerows(self.rows())
        if fh is None:
            return out.getvalue()

    def iterates_csv(self):
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["n"] + [f"x{j}" for j in range(self.x.shape[1])])
        for i, row in enumerate(self.x):
            w.writerow([str(i)] + [repr(float(v)) for v in row])
        return out.getvalue()


def _norm(v):
    return math.sqrt(float(v @ v))


class _Recorder:
    def __init__(self, x0, reference, metric_seq, noisy):
        self.reference = reference
        self.metric_seq = metric_seq
        self.noisy = noisy
        self.cols = {k: [] for k in ("gamma", "y", "p", "q", "res_primal", "res_yq",
                                     "moment_a", "moment_b", "moment_c",
                                     "err_a", "err_b", "err_c", "eta")}
        self.xs = []
        self.dist, self.mdist = [], []
        self.add_point(0, x0)

    def add_point(self, n, x):
        self.xs.append(x)
        if self.reference is not None:
            d = x - self.reference
            self.dist.append(_norm(d))
            if self.metric_seq is not None:
                U = self.metric_seq(n)
                self.mdist.append(math.sqrt(max(float(d @ U.solve(d)), 0.0)))

    def add_step(self, n, gamma, y, p, q, x, U, schedules, errors):
        c = self.cols
        c["gamma"].append(gamma)
        c["y"].append(y)
        c["p"].append(p)
        c["q"].append(q)
        r = x - p
        c["res_primal"].append(_norm(r))
        c["res_yq"].append(_norm(y - q))
        if self.metric_seq is not None:
            c["eta"].append(float(self.metric_seq.eta(n)))
        if self.noisy:
            sa, sb, sc = schedules
            c["moment_a"].append(sa.moment(n))
            c["moment_b"].append(sb.moment(n))
            c["moment_c"].append(sc.moment(n))
            a, b, e = errors
            if U is None:
                c["err_a"].append(_norm(a))
                c["err_b"].append(_norm(b))
                c["err_c"].append(_norm(e))
            else:
                c["err_a"].append(math.sqrt(max(float(a @ U.apply(a)), 0.0)))
                c["err_b"].append(math.sqrt(max(float(b @ U.solve(b)), 0.0)))
                c["err_c"].append(math.sqrt(max(float(e @ U.apply(e)), 0.0)))

    def build(self, **extra):
        c = self.cols
        dim = self.xs[0].size

        def stack(key):
            return np.array(c[key]).reshape(-1, dim)

        def arr(key, enabled=True):
            return np.array(c[key], dtype=float) if enabled else None

        zeros_moment = np.zeros(len(c["gamma"]))
        return IterateTrace(
            gamma=arr("gamma"),
            x=np.array(self.xs).reshape(-1, dim),
            y=stack("y"), p=stack("p"), q=stack("q"),
            res_primal=arr("res_primal"), res_yq=arr("res_yq"),
            dist_ref=np.array(self.dist) if self.reference is not None else None,
            metric_dist=np.array(self.mdist) if self.mdist else None,
            moment_a=arr("moment_a") if self.noisy else zeros_moment,
            moment_b=arr("moment_b") if self.noisy else zeros_moment,
            moment_c=arr("moment_c") if self.noisy else zeros_moment,
            err_a=arr("err_a", self.noisy), err_b=arr("err_b", self.noisy),
            err_c=arr("err_c", self.noisy),
            eta=arr("eta", self.metric_seq is not None),
            reference=self.reference,
            metric_seq=self.metric_seq,
            **extra,
        )


def iterate(step, x0, beta, config, reference=None, dims=None):
    """Drive ``step(n, x, gamma, U, errors) -> (x_next, y, p, q)`` and record it.

    Shared by :func:`run` and the product-space solvers so that every
    solver produces identical traces for identical arithmetic.
    """
    x = as_vector(x0, name="x0").copy()
    dim = x.size
    rule = config.step_rule(beta)
    schedules = config.schedules(dim)
    mseq = config.metric_seq
    if mseq is not None and mseq.dim != dim:
        raise ValueError(f"metric sequence has dim {mseq.dim}, iterate has dim {dim}")
    ref = None if reference is None else as_vector(reference, dim, "reference").copy()
    rng = make_generator(config.seed) if schedules is not None else None
    rec = _Recorder(x, ref, mseq, schedules is not None)
    guard = DIVERGENCE_FACTOR * (1.0 + _norm(x))
    status = "max_iters"

    def finish():
        return rec.build(beta=float(beta), mu=config.mu,
                         alpha=1.0 if mseq is None else float(mseq.alpha),
                         dims=dims, status=status)

    for n in range(config.max_iters):
        gamma = rule(n)
        U = None if mseq is None else mseq(n)
        errors = None if schedules is None else sample_errors(schedules, n, rng)
        x_next, y, p, q = step(n, x, gamma, U, errors)
        rec.add_step(n, gamma, y, p, q, x, U, schedules, errors)
        rec.add_point(n + 1, x_next)
        x = x_next
        if _norm(x) > guard:
            status = "diverged"
            trace = finish()
            raise DivergenceError(
                f"|x_{n + 1}| = {_norm(x):.3e} exceeds guard {guard:.3e}; "
                "check the Lipschitz constant and step sizes", trace=trace)
        if rec.cols["res_primal"][-1] <= config.stop_tol:
            status = "converged"
            break
    return finish()


def run(A, B, beta=None, config=None, x0=None, reference=None):
    """Run the (variable-metric) stochastic FBF iteration.

    Parameters
    ----------
    A : ResolventOp
        Maximally monotone part.
    B : ForwardOp
        Monotone Lipschitz part.
    beta : float, optional
        Lipschitz constant of ``B``; defaults to ``B.beta``.
    config : FBFConfig
    x0 : array_like
    reference : array_like, optional
        Known zero of ``A + B``; enables distance recording.

    Returns
    -------
    IterateTrace

    Raises
    ------
    DivergenceError
        When ``|x_n|`` exceeds ``1e6 (1 + |x_0|)``.
    """
    config = FBFConfig() if config is None else config
    beta = B.beta if beta is None else float(beta)
    if x0 is None:
        raise ValueError("x0 is required")
    if config.certify:
        probe = B if beta == B.beta else replace(B, beta=beta)
        rep = certify_monotone_lipschitz(probe, samples=32, rng_seed=0)
        if not rep.passed:
            raise ValueError(f"B failed the monotone {beta}-Lipschitz certification: "
                             f"{rep.details}")

    if config.metric_seq is None:
        def step(n, x, gamma, U, errors):
            return fbf_step(A, B, x, gamma, errors)
    else:
        def step(n, x, gamma, U, errors):
            return fbf_step_metric(A, B, U, x, gamma, errors)

    return iterate(step, x0, beta, config, reference=reference)
