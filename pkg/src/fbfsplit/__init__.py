"""Stochastic forward-backward-forward splitting for monotone inclusions.

Finds zeros of ``A + B`` with ``A`` maximally monotone (accessed through
resolvents) and ``B`` monotone and Lipschitz, under summable random errors
and an optional variable metric. Built on top: a primal-dual solver for
composite inclusions, convex minimization and variational inequalities,
plus trace diagnostics for the convergence argument.
"""

from .composite import (Block, CompositeProblem, ConvexBlock, ConvexProblem, beta_bound,
                        inclusion_residuals, lift, primal_objective, solve_convex,
                        solve_primal_dual, solve_variational_inequality, vi_gap)
from .diagnostics import (SupermartingaleTrace, convergence_report, epsilon_bound,
                          fbf_supermartingale, quasi_fejer_check, robbins_siegmund_check,
                          summability_report)
from .exceptions import (ConfigError, DimensionError, DivergenceError, FBFError, MetricError,
                         NonFiniteError, StepSizeError, UnsupportedCombinationError)
from .fbf import FBFConfig, IterateTrace, fbf_step, fbf_step_metric, run, step_size_interval
from .operators import (ConvexFn, ForwardOp, ResolventOp, certify_firmly_nonexpansive,
                        certify_monotone_lipschitz, conjugate_prox, forward, inverse_resolvent,
                        make_forward, make_function, make_resolvent, resolvent)
from .report import Report
from .space import (Metric, MetricSequence, ProductPoint, check_metric_sequence,
                    inverse_metric_norm, metric_norm, pack, unpack)
from .stochastic import NoiseSchedule, conditional_moment, sample_errors, verify_summability

__all__ = [
    "Block", "CompositeProblem", "ConvexBlock", "ConvexProblem", "beta_bound",
    "inclusion_residuals", "lift", "primal_objective", "solve_convex", "solve_primal_dual",
    "solve_variational_inequality", "vi_gap", "SupermartingaleTrace", "convergence_report",
    "epsilon_bound", "fbf_supermartingale", "quasi_fejer_check", "robbins_siegmund_check",
    "summability_report", "ConfigError", "DimensionError", "DivergenceError", "FBFError",
    "MetricError", "NonFiniteError", "StepSizeError", "UnsupportedCombinationError", "FBFConfig",
    "IterateTrace", "fbf_step", "fbf_step_metric", "run", "step_size_interval", "ConvexFn",
    "ForwardOp", "ResolventOp", "certify_firmly_nonexpansive", "certify_monotone_lipschitz",
    "conjugate_prox", "forward", "inverse_resolvent", "make_forward", "make_function",
    "make_resolvent", "resolvent", "Report", "Metric", "MetricSequence", "ProductPoint",
    "check_metric_sequence", "inverse_metric_norm", "metric_norm", "pack", "unpack",
    "NoiseSchedule", "conditional_moment", "sample_errors", "verify_summability",
]

__version__ = "0.1.0"
