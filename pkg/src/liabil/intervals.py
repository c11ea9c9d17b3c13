"""Point estimates with delta-method confidence intervals on a transformed scale."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit
from scipy.stats import norm

# (forward, inverse, derivative of forward)
SCALES = {
    "identity": (lambda v: v, lambda u: u, lambda v: 1.0),
    "log": (math.log, math.exp, lambda v: 1.0 / v),
    "logit": (logit, expit, lambda v: 1.0 / (v * (1.0 - v))),
    "atanh": (math.atanh, math.tanh, lambda v: 1.0 / (1.0 - v * v)),
}


@dataclass(frozen=True)
class Estimate:
    value: float
    lower: float
    upper: float
    se: float = math.nan

    def covers(self, truth: float) -> bool:
        return bool(self.lower <= truth <= self.upper)

    def as_tuple(self):
        return self.value, self.lower, self.upper


def _in_domain(scale, v):
    if scale == "log":
        return v > 0
    if scale == "logit":
        return 0 < v < 1
    if scale == "atanh":
        return -1 < v < 1
    return math.isfinite(v)


def delta_interval(value: float, grad, vcov, scale: str = "identity", level: float = 0.95) -> Estimate:
    """Interval for ``value`` whose gradient in theta is ``grad``.

    The standard error is formed on ``scale`` and the interval is mapped
    back, so bounded quantities keep bounded limits. ``se`` is on the
    original scale.
    """
    value = float(value)
    grad = np.asarray(grad, dtype=float)
    var = float(grad @ vcov @ grad)
    se = math.sqrt(max(var, 0.0))
    if not _in_domain(scale, value):
        return Estimate(value, value, value, se)
    fwd, inv, der = SCALES[scale]
    z = norm.ppf(0.5 + level / 2.0)
    half = z * se * abs(der(value))
    u = fwd(value)
    lo, hi = float(inv(u - half)), float(inv(u + half))
    return Estimate(value, min(lo, value), max(hi, value), se)


def fixed(value: float) -> Estimate:
    """A quantity known exactly (e.g. a component absent from the model)."""
    return Estimate(float(value), float(value), float(value), 0.0)
