"""Stepsize schedules for the three-point methods.

    fixed          alpha_k = alpha
    inv_sqrt       alpha_k = alpha0 / sqrt(k + 1)
    gap_linear     alpha_k = alpha0 (f(x_k) - f*)
    gap_sqrt       alpha_k = (theta mu / L) sqrt(2 lambda (f(x_k) - f*))
    solution_free  alpha_k = |f(x_k + t s_k) - f(x_k)| / (L t)

``solution_free`` spends one objective evaluation per step on its probe;
all others are free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, InvalidStateError, OracleError

# f(x_k) may undershoot a numerically computed f* by rounding alone
GAP_ROUNDING = 1e-12


@dataclass
class StepContext:
    k: int
    f_xk: float
    x_k: Optional[np.ndarray] = None
    s_k: Optional[np.ndarray] = None
    probe: Optional[Callable[[np.ndarray], float]] = None


def _positive(name, value):
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ConfigurationError(f"{name} must be a positive finite number, got {value!r}", key=name)
    return value


def _gap(f_xk, f_star):
    gap = np.asarray(f_xk, dtype=float) - f_star
    if np.any(gap < -GAP_ROUNDING * max(1.0, abs(f_star))):
        raise InvalidStateError(
            f"f(x_k) = {np.min(f_xk)!r} lies below f* = {f_star!r}; f* is wrong"
        )
    return np.maximum(gap, 0.0)


@dataclass(frozen=True)
class StepsizeSchedule:
    variant = "abstract"
    probes_per_step = 0

    def alpha(self, ctx: StepContext) -> float:
        return float(self.alpha_batch(ctx.k, np.asarray([ctx.f_xk]))[0])

    def alpha_batch(self, k, f_xk, x_k=None, s_k=None, probe=None) -> np.ndarray:
        """Vectorized ``alpha`` for a stack of iterates sharing index k."""
        raise NotImplementedError


@dataclass(frozen=True)
class Fixed(StepsizeSchedule):
    alpha_value: float
    variant = "fixed"

    def __post_init__(self):
        _positive("alpha", self.alpha_value)

    def alpha_batch(self, k, f_xk, x_k=None, s_k=None, probe=None):
        return np.full(np.shape(f_xk), self.alpha_value)


@dataclass(frozen=True)
class InvSqrt(StepsizeSchedule):
    alpha0: float
    variant = "inv_sqrt"

    def __post_init__(self):
        _positive("alpha0", self.alpha0)

    def alpha_batch(self, k, f_xk, x_k=None, s_k=None, probe=None):
        return np.full(np.shape(f_xk), self.alpha0 / math.sqrt(k + 1))


@dataclass(frozen=True)
class GapLinear(StepsizeSchedule):
    alpha0: float
    f_star: float
    variant = "gap_linear"

    def __post_init__(self):
        _positive("alpha0", self.alpha0)

    def alpha_batch(self, k, f_xk, x_k=None, s_k=None, probe=None):
        return self.alpha0 * _gap(f_xk, self.f_star)


@dataclass(frozen=True)
class GapSqrt(StepsizeSchedule):
    mu_D: float
    L: float
    lam: float
    f_star: float
    theta: float = 1.0
    variant = "gap_sqrt"

    def __post_init__(self):
        for name in ("mu_D", "L", "lam"):
            _positive(name, getattr(self, name))
        if not 0 < self.theta < 2:
            raise ConfigurationError(f"theta must lie in (0, 2), got {self.theta!r}", key="theta")

    def alpha_batch(self, k, f_xk, x_k=None, s_k=None, probe=None):
        scale = self.theta * self.mu_D / self.L
        return scale * np.sqrt(2.0 * self.lam * _gap(f_xk, self.f_star))


@dataclass(frozen=True)
class SolutionFree(StepsizeSchedule):
    """Finite-difference estimate of the best step |<grad f, s>| / L.

    Overestimates or underestimates the ideal step by at most t/2 for
    unit-norm directions on an L-smooth objective.
    """

    L: float
    t: float = 1e-4
    variant = "solution_free"
    probes_per_step = 1

    def __post_init__(self):
        _positive("L", self.L)
        _positive("t", self.t)

    def alpha(self, ctx):
        if ctx.s_k is None or ctx.x_k is None or ctx.probe is None:
            raise ValueError("solution_free needs x_k, s_k and a probe")
        f_probe = ctx.probe(ctx.x_k + self.t * ctx.s_k)
        if not math.isfinite(f_probe):
            raise OracleError(f"probe returned {f_probe!r}")
        return abs(f_probe - ctx.f_xk) / (self.L * self.t)

    def alpha_batch(self, k, f_xk, x_k=None, s_k=None, probe=None):
        if s_k is None or x_k is None or probe is None:
            raise ValueError("solution_free needs x_k, s_k and a probe")
        f_probe = np.asarray(probe(x_k + self.t * s_k), dtype=float)
        if not np.all(np.isfinite(f_probe)):
            raise OracleError("probe returned a non-finite value")
        return np.abs(f_probe - f_xk) / (self.L * self.t)


SCHEDULES = {
    "fixed": Fixed,
    "inv_sqrt": InvSqrt,
    "gap_linear": GapLinear,
    "gap_sqrt": GapSqrt,
    "solution_free": SolutionFree,
}

# parameter names as written in configuration strings
PARAMS = {
    "fixed": ("alpha",),
    "inv_sqrt": ("alpha0",),
    "gap_linear": ("alpha0", "f_star"),
    "gap_sqrt": ("theta", "mu_D", "L", "lambda", "f_star"),
    "solution_free": ("L", "t"),
}


def make_schedule(variant: str, **params) -> StepsizeSchedule:
    """Build a schedule from configuration-style parameter names.

    ``make_schedule("gap_sqrt", mu_D=0.1, L=4, **{"lambda": 0.01}, f_star=0)``
    """
    if variant not in SCHEDULES:
        raise ConfigurationError(f"unknown stepsize schedule {variant!r}", key="stepsize")
    allowed = PARAMS[variant]
    for name in params:
        if name not in allowed:
            raise ConfigurationError(
                f"{variant} does not take parameter {name!r} (allowed: {', '.join(allowed)})",
                key=name,
            )
    kwargs = dict(params)
    if variant == "fixed" and "alpha" in kwargs:
        kwargs["alpha_value"] = kwargs.pop("alpha")
    if "lambda" in kwargs:
        kwargs["lam"] = kwargs.pop("lambda")
    try:
        return SCHEDULES[variant](**kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"{variant}: {exc}", key="stepsize") from None
