"""Iteration rules and the run loop.

stp   three-point comparison along one random direction
pstp  the same with the average of ``tau`` random directions
rgf   random gradient-free step along a forward-difference estimate
dds   coordinate search over +-e_i, doubling/halving its stepsize

Evaluation accounting: the value at the current iterate is cached and never
re-evaluated, so STP/PSTP cost 2 evaluations per iteration (3 with the
solution-free stepsize), RGF costs 2, DDS between 1 and 2n.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

import numpy as np

from .distributions import DirectionSampler
from .errors import ConfigurationError, OracleError, StationaryPointError
from .problems import EvalCounter, Problem
from .stepsizes import StepContext, StepsizeSchedule

METHODS = ("stp", "pstp", "rgf", "dds")
STATUSES = ("target_reached", "budget_exhausted", "stationary", "oracle_failure")
# "chi": scale each drawn unit direction by an independent chi_n radius, so the
# RGF probe direction is N(0, I_n), the law its 1/(4(n+4)) stepsize assumes.
# "unit": use the unit-norm direction as drawn.
RGF_RADII = ("chi", "unit")
DEFAULT_MAX_EVALS = 100_000


@dataclass(frozen=True)
class SolverConfig:
    method: str
    sampler: Optional[DirectionSampler] = None
    schedule: Optional[StepsizeSchedule] = None
    tau: int = 1
    mu: float = 1e-4
    alpha: Optional[float] = None
    alpha0: float = 1.0
    rgf_radius: str = "chi"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}", key="method")
        if self.method in ("stp", "pstp", "rgf") and self.sampler is None:
            raise ConfigurationError(f"{self.method} needs a direction sampler", key="sampler")
        if self.method in ("stp", "pstp") and self.schedule is None:
            raise ConfigurationError(f"{self.method} needs a stepsize schedule", key="stepsize")
        if self.method == "pstp" and (int(self.tau) != self.tau or self.tau < 1):
            raise ConfigurationError(f"tau must be a positive integer, got {self.tau!r}", key="tau")
        if self.method == "rgf":
            if not 0 < self.mu < 1:
                raise ConfigurationError(f"mu must lie in (0, 1), got {self.mu!r}", key="mu")
            if self.alpha is not None and not self.alpha > 0:
                raise ConfigurationError(f"alpha must be positive, got {self.alpha!r}", key="alpha")
            if self.rgf_radius not in RGF_RADII:
                raise ConfigurationError(f"unknown rgf radius {self.rgf_radius!r}", key="radius")
        if self.method == "dds" and not self.alpha0 > 0:
            raise ConfigurationError(f"alpha0 must be positive, got {self.alpha0!r}", key="alpha0")

    def rgf_alpha(self, n: int) -> float:
        # default 1/(4(n+4)), i.e. 1/(4 L (n+4)) with L = 1
        return self.alpha if self.alpha is not None else 1.0 / (4.0 * (n + 4))

    def check_compatible(self, problem: Problem) -> None:
        if self.sampler is not None:
            if self.sampler.dim != problem.dim:
                raise ConfigurationError(
                    f"sampler dimension {self.sampler.dim} != problem dimension {problem.dim}",
                    key="sampler",
                )
            if self.sampler.requires_gradient and not problem.has_gradient:
                raise ConfigurationError(
                    f"{self.sampler.kind} needs the analytic gradient of {problem.name}",
                    key="sampler",
                )


@dataclass
class IterationState:
    x: np.ndarray
    f_x: float
    k: int = 0
    dds_alpha: Optional[float] = None
    alpha: float = math.nan  # stepsize used by the step that produced this state


@dataclass(frozen=True)
class StoppingRule:
    epsilon: float
    f_star: float
    max_evals: int = DEFAULT_MAX_EVALS
    max_iters: Optional[int] = None
    f_x0: Optional[float] = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon!r}", key="eps")
        if self.f_star is None:
            raise ConfigurationError("the stopping rule needs a known f*", key="f_star")
        if self.max_evals < 0:
            raise ConfigurationError("max_evals must be >= 0", key="max_evals")

    def target(self, f_x0: Optional[float] = None) -> float:
        f0 = self.f_x0 if f_x0 is None else f_x0
        return self.f_star + self.epsilon * (f0 - self.f_star)


@dataclass
class Trace:
    k: list = field(default_factory=list)
    f: list = field(default_factory=list)
    evals: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    status: Optional[str] = None
    evals_to_target: Optional[int] = None

    def append(self, state: IterationState, evals: int) -> None:
        self.k.append(state.k)
        self.f.append(state.f_x)
        self.evals.append(evals)
        self.alpha.append(state.alpha)

    @property
    def total_evals(self) -> int:
        return self.evals[-1] if self.evals else 0

    @property
    def f_final(self) -> float:
        return self.f[-1]

    def to_csv(self, fh=None) -> str:
        """Write ``k,f,evals,alpha`` rows with 17 significant digits."""
        out = io.StringIO() if fh is None else fh
        out.write("k,f,evals,alpha\n")
        for k, f, e, a in zip(self.k, self.f, self.evals, self.alpha):
            out.write(f"{k},{f:.17g},{e},{a:.17g}\n")
        return out.getvalue() if fh is None else ""


# ---------------------------------------------------------------------------
# Steps


def _checked(value):
    if not math.isfinite(value):
        raise OracleError(f"objective returned {value!r}")
    return value


def _direction(cfg, problem, state, rng):
    sampler = cfg.sampler
    grad = None
    if sampler.requires_gradient:
        grad = problem.gradient(state.x)
        if not np.any(grad):
            raise StationaryPointError(f"zero gradient at k={state.k}")
    if cfg.method == "pstp":
        return sampler.sample_batch(rng, cfg.tau, grad).mean(axis=0)
    return sampler.sample(rng, grad)


def _three_point(state, cfg, problem, counter, s):
    """Compare f at x, x + alpha s, x - alpha s; keep the best (ties: stay, then +)."""
    x, f_x = state.x, state.f_x

    def probe(y):
        return problem.evaluate(y, counter)

    ctx = StepContext(k=state.k, f_xk=f_x, x_k=x, s_k=s, probe=probe)
    alpha = cfg.schedule.alpha(ctx)
    x_plus = x + alpha * s
    x_minus = x - alpha * s
    f_plus = _checked(problem.evaluate(x_plus, counter))
    f_minus = _checked(problem.evaluate(x_minus, counter))
    new_x, new_f = x, f_x
    if f_plus < new_f:
        new_x, new_f = x_plus, f_plus
    if f_minus < new_f:
        new_x, new_f = x_minus, f_minus
    return replace(state, x=new_x, f_x=new_f, k=state.k + 1, alpha=alpha)


def stp_step(state, cfg, problem, rng, counter, direction=None) -> IterationState:
    s = _direction(cfg, problem, state, rng) if direction is None else np.asarray(direction, float)
    return _three_point(state, cfg, problem, counter, s)


def pstp_step(state, cfg, problem, rng, counter, directions=None) -> IterationState:
    """STP along the mean of ``tau`` directions; drawing them costs no evaluations."""
    if directions is None:
        s = _direction(cfg, problem, state, rng)
    else:
        s = np.mean(np.asarray(directions, dtype=float), axis=0)
    return _three_point(state, cfg, problem, counter, s)


def rgf_step(state, cfg, problem, rng, counter, direction=None) -> IterationState:
    """Unconditional step x - alpha ((f(x + mu s) - f(x)) / mu) s; not monotone."""
    if direction is None:
        s = _direction(cfg, problem, state, rng)
        if cfg.rgf_radius == "chi":
            s = s * math.sqrt(rng.chisquare(problem.dim))
    else:
        s = np.asarray(direction, float)
    alpha = cfg.rgf_alpha(problem.dim)
    f_probe = _checked(problem.evaluate(state.x + cfg.mu * s, counter))
    slope = (f_probe - state.f_x) / cfg.mu
    x_new = state.x - alpha * slope * s
    f_new = _checked(problem.evaluate(x_new, counter))
    return replace(state, x=x_new, f_x=f_new, k=state.k + 1, alpha=alpha)


def dds_step(state, cfg, problem, counter) -> IterationState:
    """Opportunistic poll of +e1, -e1, ..., +en, -en; accept the first simple decrease."""
    alpha = cfg.alpha0 if state.dds_alpha is None else state.dds_alpha
    for i in range(problem.dim):
        for sign in (1.0, -1.0):
            y = state.x.copy()
            y[i] += sign * alpha
            f_y = _checked(problem.evaluate(y, counter))
            if f_y < state.f_x:
                return replace(state, x=y, f_x=f_y, k=state.k + 1, dds_alpha=2 * alpha, alpha=alpha)
    return replace(state, k=state.k + 1, dds_alpha=alpha / 2, alpha=alpha)


def step(state, cfg, problem, rng, counter) -> IterationState:
    if cfg.method == "stp":
        return stp_step(state, cfg, problem, rng, counter)
    if cfg.method == "pstp":
        return pstp_step(state, cfg, problem, rng, counter)
    if cfg.method == "rgf":
        return rgf_step(state, cfg, problem, rng, counter)
    return dds_step(state, cfg, problem, counter)


# ---------------------------------------------------------------------------
# Run loop


def run(problem: Problem, cfg: SolverConfig, stop: StoppingRule, seed) -> Trace:
    """Iterate until f <= f* + eps (f(x0) - f*) or the evaluation budget is spent.

    The budget is checked before each iteration, so the last iteration may
    overshoot ``max_evals`` by at most its own cost.  Deterministic in
    (problem, cfg, stop, seed).
    """
    cfg.check_compatible(problem)
    rng = np.random.default_rng(seed)
    counter = EvalCounter()
    f0 = _checked(problem.evaluate(problem.x0, counter))
    target = stop.target(f0)
    state = IterationState(
        x=problem.x0.copy(), f_x=f0, dds_alpha=cfg.alpha0 if cfg.method == "dds" else None
    )
    trace = Trace()
    trace.append(state, counter.count)
    if f0 <= target:
        trace.status, trace.evals_to_target = "target_reached", counter.count
        return trace
    while True:
        if counter.count >= stop.max_evals or (
            stop.max_iters is not None and state.k >= stop.max_iters
        ):
            trace.status = "budget_exhausted"
            return trace
        try:
            state = step(state, cfg, problem, rng, counter)
        except StationaryPointError:
            trace.status = "stationary"
            return trace
        except OracleError:
            trace.status = "oracle_failure"
            return trace
        trace.append(state, counter.count)
        if state.f_x <= target:
            trace.status, trace.evals_to_target = "target_reached", counter.count
            return trace


def iterate_ensemble(
    problem: Problem, cfg: SolverConfig, m: int, rng, counter: Optional[EvalCounter] = None
) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Run ``m`` independent STP/PSTP chains in lockstep.

    Yields ``(k, X, F)`` with X of shape (m, n) and F = f(X), starting at
    k = 0.  Meant for expectation experiments over many replicates; the
    caller decides when to stop.  Uses the same update and tie rule as
    ``stp_step``.
    """
    if cfg.method not in ("stp", "pstp"):
        raise ConfigurationError("ensembles support stp and pstp only", key="method")
    cfg.check_compatible(problem)
    counter = EvalCounter() if counter is None else counter
    sampler, schedule, n = cfg.sampler, cfg.schedule, problem.dim

    def f(xs):
        vals = problem.evaluate_batch(xs, counter)
        if not np.all(np.isfinite(vals)):
            raise OracleError("objective returned a non-finite value")
        return vals

    X = np.tile(problem.x0, (m, 1))
    F = f(X)
    k = 0
    yield k, X, F
    while True:
        grad = problem.gradient(X) if sampler.requires_gradient else None
        if cfg.method == "pstp":
            if grad is not None:
                grad = np.repeat(grad, cfg.tau, axis=0)
            S = sampler.sample_batch(rng, m * cfg.tau, grad).reshape(m, cfg.tau, n).mean(axis=1)
        else:
            S = sampler.sample_batch(rng, m, grad)
        A = schedule.alpha_batch(k, F, X, S, f)[:, None]
        Xp, Xm = X + A * S, X - A * S
        Fp, Fm = f(Xp), f(Xm)
        plus = (Fp < F) & (Fp <= Fm)
        minus = (Fm < F) & (Fm < Fp)
        X = np.where(plus[:, None], Xp, np.where(minus[:, None], Xm, X))
        F = np.where(plus, Fp, np.where(minus, Fm, F))
        k += 1
        yield k, X, F
