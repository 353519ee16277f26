"""Check reports returned by certification and diagnostic routines."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


def _plain(value):
    # numpy scalars/arrays -> builtin types; non-finite floats -> strings so
    # the JSON stays standard.
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isfinite(value):
            return value
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    return value


@dataclass(frozen=True)
class Report:
    """Outcome of an empirical check.

    Attributes
    ----------
    check : str
        Name of the check that produced the report.
    passed : bool
        Overall verdict.
    worst_margin : float
        Smallest slack observed; negative values are violations.
    violation_rate : float
        Fraction of tested instances with negative slack (beyond tolerance).
    details : dict
        Check-specific extra content.
    """

    check: str
    passed: bool
    worst_margin: float
    violation_rate: float = 0.0
    details: dict[str, Any] = field(default_factory=dict)

    def __bool__(self):
        return bool(self.passed)

    def to_dict(self):
        return {
            "check": self.check,
            "pass": bool(self.passed),
            "worst_margin": _plain(self.worst_margin),
            "violation_rate": _plain(self.violation_rate),
            "details": _plain(self.details),
        }

    def to_json(self, **kwargs):
        kwargs.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kwargs)
