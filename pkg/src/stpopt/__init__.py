"""Stochastic three-point derivative-free optimization with a benchmark harness."""
from .distributions import (
    CoordinateSampler,
    DirectionSampler,
    GaussianSampler,
    NGDOracle,
    NRCDOracle,
    NSGDOracle,
    OrthoBasisSampler,
    SignGDOracle,
    SphereSampler,
    make_sampler,
    sphere_mu,
)
from .errors import (
    ConfigurationError,
    InvalidStateError,
    OracleError,
    StationaryPointError,
    UnsupportedOperation,
)
from .problems import EvalCounter, Problem, chain_quadratic, finite_diff_grad, suite_load, suite_manifest
from .profiles import RunRecord, performance_ratios, profile_curve
from .solvers import IterationState, SolverConfig, StoppingRule, Trace, run
from .stepsizes import make_schedule

__version__ = "0.1.0"
