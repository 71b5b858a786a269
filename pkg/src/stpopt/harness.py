"""Experiment plans, the run matrix, assumption checks and reports.

Methods are configured with one-line strings ``method:sampler:schedule:params``::

    stp:sphere:inv_sqrt:alpha0=1
    stp:sphere:fixed:alpha=0.1*eps          # alpha resolved per tolerance
    stp:sphere:solution_free:t=1e-4         # L taken from the problem
    pstp:sphere:inv_sqrt:alpha0=1,tau=8
    stp:oracle_nsgd:fixed:alpha=0.05,noise_scale=0.1
    rgf:sphere:mu=1e-4                      # alpha defaults to 1/(4(n+4))
    dds:alpha0=1

Schedule constants that are not given (``L``, ``lambda``, ``f_star``,
``mu_D``) are filled in from the problem and the direction law; a pair whose
problem lacks a needed constant is skipped and the reason is logged.
"""
from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import distributions, profiles
from .distributions import NON_ORACLE_KINDS, make_sampler
from .errors import ConfigurationError
from .problems import SUITE_NAMES, Problem, suite_load
from .solvers import DEFAULT_MAX_EVALS, RGF_RADII, SolverConfig, StoppingRule, run
from .stepsizes import PARAMS as SCHEDULE_PARAMS
from .stepsizes import make_schedule

log = logging.getLogger(__name__)

DEFAULT_EPSILONS = (1e-1, 1e-3, 1e-5)
DEFAULT_REPLICATES = 10
# STP-vs (nonconvex and convex variants), STP-fs, RGF and coordinate search
DEFAULT_METHODS = (
    "stp:sphere:inv_sqrt:alpha0=1",
    "stp:sphere:solution_free:t=1e-4",
    "stp:sphere:fixed:alpha=0.1*eps",
    "rgf:sphere",
    "dds:alpha0=1",
)

_SAMPLER_PARAMS = ("noise_scale",)
_METHOD_PARAMS = {
    "stp": (),
    "pstp": ("tau",),
    "rgf": ("mu", "alpha", "radius"),
    "dds": ("alpha0",),
}
# constants a schedule may take from the problem or the direction law
_AUTO_PARAMS = ("L", "lambda", "f_star", "mu_D")
_EPS_VALUE = re.compile(r"^(?:(?P<c>[^*]+)\*)?eps$")


def eps_tag(eps: float) -> str:
    """Compact decimal label: 1e-3 for 0.001, 2.5e-2 for 0.025."""
    mantissa, exponent = f"{eps:.15e}".split("e")
    mantissa = mantissa.rstrip("0").rstrip(".")
    return f"{mantissa}e{int(exponent)}"


def _float(key: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigurationError(f"{key}: {text!r} is not a number", key=key) from None
    if not math.isfinite(value):
        raise ConfigurationError(f"{key}: {text!r} is not finite", key=key)
    return value


@dataclass(frozen=True)
class EpsScaled:
    """A parameter value written as ``c*eps``."""

    coef: float

    def resolve(self, eps: float) -> float:
        return self.coef * eps


@dataclass(frozen=True)
class MethodSpec:
    text: str
    method: str
    sampler: Optional[str] = None
    schedule: Optional[str] = None
    params: tuple = ()  # sorted (key, value) pairs

    @property
    def depends_on_eps(self) -> bool:
        return any(isinstance(v, EpsScaled) for _, v in self.params)

    def slug(self) -> str:
        return re.sub(r"[^A-Za-z0-9_.=-]+", "_", self.text.replace("=", "-"))

    def build(self, problem: Problem, eps: Optional[float] = None) -> SolverConfig:
        """Resolve this method against one problem (and tolerance) into a SolverConfig."""
        values = {}
        for key, value in self.params:
            if isinstance(value, EpsScaled):
                if eps is None:
                    raise ConfigurationError(f"{key} depends on eps but no eps given", key=key)
                value = value.resolve(eps)
            values[key] = value
        if self.method == "dds":
            return SolverConfig("dds", alpha0=values.get("alpha0", 1.0))
        sampler_kw = {k: values.pop(k) for k in _SAMPLER_PARAMS if k in values}
        try:
            sampler = make_sampler(self.sampler, problem.dim, **sampler_kw)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"{self.text}: {exc}", key="sampler") from None
        if self.method == "rgf":
            radius = values.pop("radius", "chi")
            return SolverConfig("rgf", sampler=sampler, rgf_radius=radius, **values)
        tau = int(values.pop("tau", 1))
        sched_kw = {k: v for k, v in values.items() if k in SCHEDULE_PARAMS[self.schedule]}
        for key in SCHEDULE_PARAMS[self.schedule]:
            if key in sched_kw or key not in _AUTO_PARAMS:
                continue
            sched_kw[key] = _problem_constant(key, problem, sampler)
        schedule = make_schedule(self.schedule, **sched_kw)
        return SolverConfig(self.method, sampler=sampler, schedule=schedule, tau=tau)


def _problem_constant(key, problem, sampler):
    if key == "mu_D":
        return sampler.theoretical_mu()
    value = {
        "L": problem.lipschitz_L,
        "lambda": problem.strong_convexity_lambda,
        "f_star": problem.f_star,
    }[key]
    if value is None or (key == "lambda" and value <= 0):
        raise ConfigurationError(f"{problem.name} has no known {key}", key=key)
    return value


def parse_method(text: str) -> MethodSpec:
    """Parse a ``method:sampler:schedule:params`` string."""
    parts = text.strip().split(":")
    method = parts[0]
    if method not in _METHOD_PARAMS:
        raise ConfigurationError(f"unknown method {method!r} in {text!r}", key="method")
    # the params segment is the trailing one that contains '='
    raw_params = parts.pop() if len(parts) > 1 and "=" in parts[-1] else ""
    rest = parts[1:]
    sampler = schedule = None
    if method == "dds":
        if rest:
            raise ConfigurationError(f"dds takes only parameters, got {text!r}", key="method")
    elif method == "rgf":
        if len(rest) > 1:
            raise ConfigurationError(f"expected rgf[:sampler][:params], got {text!r}", key="method")
        sampler = rest[0] if rest else "sphere"
    else:
        if len(rest) != 2:
            raise ConfigurationError(f"expected {method}:sampler:schedule[:params], got {text!r}", key="method")
        sampler, schedule = rest
        if schedule not in SCHEDULE_PARAMS:
            raise ConfigurationError(f"unknown stepsize schedule {schedule!r}", key="stepsize")
    if sampler is not None:
        if sampler in ("coord_weighted", "ortho_basis"):
            raise ConfigurationError(
                f"{sampler} needs vector parameters and is not available from a method string",
                key="sampler",
            )
        if sampler not in distributions._KINDS:
            raise ConfigurationError(f"unknown direction law {sampler!r}", key="sampler")
    if method == "rgf" and sampler != "sphere":
        raise ConfigurationError("rgf draws its directions from the sphere", key="sampler")
    allowed = set(_METHOD_PARAMS[method])
    if schedule is not None:
        allowed |= set(SCHEDULE_PARAMS[schedule])
    if sampler == "oracle_nsgd":
        allowed |= set(_SAMPLER_PARAMS)
    params = {}
    for item in filter(None, raw_params.split(",")):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"malformed parameter {item!r} in {text!r}", key="method")
        if key not in allowed:
            raise ConfigurationError(f"{text!r} does not take parameter {key!r}", key=key)
        if key in params:
            raise ConfigurationError(f"parameter {key!r} given twice", key=key)
        value = value.strip()
        if key == "radius":
            if value not in RGF_RADII:
                raise ConfigurationError(f"radius must be one of {RGF_RADII}", key=key)
            params[key] = value
            continue
        m = _EPS_VALUE.match(value)
        if m:
            params[key] = EpsScaled(_float(key, m.group("c")) if m.group("c") else 1.0)
        else:
            params[key] = _float(key, value)
        if key == "tau" and (params[key] != int(params[key]) or params[key] < 1):
            raise ConfigurationError(f"tau must be a positive integer, got {value!r}", key=key)
    return MethodSpec(text.strip(), method, sampler, schedule, tuple(sorted(params.items())))


# ---------------------------------------------------------------------------
# Plans


@dataclass(frozen=True)
class ExperimentPlan:
    suite: str = "smoke"
    methods: tuple = ()
    epsilons: tuple = DEFAULT_EPSILONS
    replicates: int = DEFAULT_REPLICATES
    max_evals: int = DEFAULT_MAX_EVALS
    master_seed: int = 0
    out_dir: str = "results"

    def __post_init__(self):
        if self.suite not in SUITE_NAMES:
            raise ConfigurationError(f"unknown suite {self.suite!r}", key="suite")
        if not self.methods:
            object.__setattr__(self, "methods", tuple(parse_method(m) for m in DEFAULT_METHODS))
        labels = [m.text for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ConfigurationError("duplicate method string", key="method")
        if not self.epsilons or any(not (0 < e < 1) for e in self.epsilons):
            raise ConfigurationError(f"eps values must lie in (0, 1), got {self.epsilons}", key="eps")
        if self.replicates < 1:
            raise ConfigurationError("seeds must be >= 1", key="seeds")
        if self.max_evals < 1:
            raise ConfigurationError("max-evals must be >= 1", key="max_evals")

    def to_text(self) -> str:
        lines = [f"suite={self.suite}"]
        lines += [f"method={m.text}" for m in self.methods]
        lines += [f"eps={e!r}" for e in self.epsilons]
        lines += [
            f"seeds={self.replicates}",
            f"max_evals={self.max_evals}",
            f"master_seed={self.master_seed}",
            f"out={self.out_dir}",
        ]
        return "\n".join(lines) + "\n"


# key in a plan file -> ExperimentPlan field
PLAN_KEYS = {
    "suite": "suite",
    "method": "methods",
    "eps": "epsilons",
    "seeds": "replicates",
    "replicates": "replicates",
    "max_evals": "max_evals",
    "master_seed": "master_seed",
    "out": "out_dir",
    "out_dir": "out_dir",
}


def read_plan_file(path) -> dict:
    """Read a flat ``key=value`` file; ``method`` and ``eps`` may repeat."""
    values: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep:
                raise ConfigurationError(f"{path}:{lineno}: expected key=value", key=key)
            if key not in PLAN_KEYS:
                raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}", key=key)
            name = PLAN_KEYS[key]
            if name in ("methods", "epsilons"):
                values.setdefault(name, []).append(value.strip())
            else:
                values[name] = value.strip()
    return values


def _int(key, value):
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key}: {value!r} is not an integer", key=key) from None


def parse_plan(args=None, plan_file=None, **overrides) -> ExperimentPlan:
    """Build a validated plan from a plan file and/or flag values.

    ``args`` may be an argparse namespace (attributes ``suite``, ``method``,
    ``eps``, ``seeds``, ``max_evals``, ``master_seed``, ``out``, ``plan``);
    flags given explicitly override plan-file entries.
    """
    raw: dict = {}
    if args is not None and getattr(args, "plan", None):
        plan_file = args.plan
    if plan_file is not None:
        raw.update(read_plan_file(plan_file))
    if args is not None:
        for attr, name in (
            ("suite", "suite"),
            ("method", "methods"),
            ("eps", "epsilons"),
            ("seeds", "replicates"),
            ("max_evals", "max_evals"),
            ("master_seed", "master_seed"),
            ("out", "out_dir"),
        ):
            value = getattr(args, attr, None)
            if value is not None:
                raw[name] = value
    raw.update(overrides)
    kwargs = {}
    if "suite" in raw:
        kwargs["suite"] = raw["suite"]
    if "methods" in raw:
        kwargs["methods"] = tuple(
            m if isinstance(m, MethodSpec) else parse_method(m) for m in raw["methods"]
        )
    if "epsilons" in raw:
        eps = []
        for item in raw["epsilons"]:
            for piece in str(item).split(","):
                eps.append(_float("eps", piece.strip()))
        kwargs["epsilons"] = tuple(eps)
    for name, key in (("replicates", "seeds"), ("max_evals", "max_evals"), ("master_seed", "master_seed")):
        if name in raw:
            kwargs[name] = _int(key, raw[name])
    if "out_dir" in raw:
        kwargs["out_dir"] = os.fspath(raw["out_dir"])
    return ExperimentPlan(**kwargs)


# ---------------------------------------------------------------------------
# Run matrix


def run_seed(master_seed: int, problem: str, method: str, replicate: int) -> int:
    """Stable 64-bit seed derived from the run's identity."""
    key = f"{master_seed}\x1f{problem}\x1f{method}\x1f{replicate}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


@dataclass(frozen=True)
class RunSummary:
    eps: float
    problem: str
    method: str
    replicate: int
    seed: int
    status: str
    evals_to_target: Optional[int]
    evals: int
    f_final: float
    trace_path: str


@dataclass(frozen=True)
class MatrixResult:
    records: dict  # eps -> list of RunRecord
    runs: list
    skipped: list = field(default_factory=list)  # (problem, method, reason)


RECORD_HEADER = ["eps", "problem", "solver", "mean_evals_to_target", "n_replicates", "n_solved", "total_evals"]
RUN_HEADER = ["eps", "problem", "method", "replicate", "seed", "status", "evals_to_target", "evals", "f_final", "trace"]


def _na(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def run_matrix(plan: ExperimentPlan, write: bool = True) -> MatrixResult:
    """Run every (eps, problem, method, replicate) of the plan.

    Writes ``traces/``, ``runs.csv``, ``records.csv`` and ``plan.txt`` under
    the plan's output directory when ``write`` is true.
    """
    problems = sorted(suite_load(plan.suite), key=lambda p: p.name)
    methods = sorted(plan.methods, key=lambda m: m.text)
    out = plan.out_dir
    runs, skipped, records = [], [], {}
    for eps in plan.epsilons:
        tag = eps_tag(eps)
        records[eps] = []
        for problem in problems:
            for spec in methods:
                try:
                    cfg = spec.build(problem, eps)
                    cfg.check_compatible(problem)
                except ConfigurationError as exc:
                    if eps == plan.epsilons[0]:
                        log.warning("skipping %s on %s: %s", spec.text, problem.name, exc)
                        skipped.append((problem.name, spec.text, str(exc)))
                    continue
                stop = StoppingRule(eps, problem.f_star, max_evals=plan.max_evals)
                hits, total = [], 0
                for rep in range(plan.replicates):
                    seed = run_seed(plan.master_seed, problem.name, spec.text, rep)
                    trace = run(problem, cfg, stop, seed)
                    path = os.path.join("traces", problem.name, spec.slug(), f"eps{tag}_rep{rep}.csv")
                    if write:
                        full = os.path.join(out, path)
                        os.makedirs(os.path.dirname(full), exist_ok=True)
                        with open(full, "w", newline="") as fh:
                            trace.to_csv(fh)
                    if trace.status == "oracle_failure":
                        log.warning("%s on %s rep %d: oracle failure", spec.text, problem.name, rep)
                    runs.append(
                        RunSummary(
                            eps, problem.name, spec.text, rep, seed, trace.status,
                            trace.evals_to_target, trace.total_evals, trace.f_final, path,
                        )
                    )
                    hits.append(trace.evals_to_target)
                    total += trace.total_evals
                records[eps].append(profiles.aggregate(problem.name, spec.text, hits, total))
    result = MatrixResult(records, runs, skipped)
    if write:
        write_results(result, plan)
    return result


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_results(result: MatrixResult, plan: ExperimentPlan) -> None:
    os.makedirs(plan.out_dir, exist_ok=True)
    rows = []
    for eps, recs in result.records.items():
        for r in recs:
            rows.append([_na(eps), r.problem, r.solver, _na(r.mean_evals_to_target),
                         r.n_replicates, r.n_solved, r.total_evals])
    _write_csv(os.path.join(plan.out_dir, "records.csv"), RECORD_HEADER, rows)
    _write_csv(
        os.path.join(plan.out_dir, "runs.csv"),
        RUN_HEADER,
        [[_na(r.eps), r.problem, r.method, r.replicate, r.seed, r.status,
          _na(r.evals_to_target), r.evals, _na(r.f_final), r.trace_path] for r in result.runs],
    )
    with open(os.path.join(plan.out_dir, "plan.txt"), "w") as fh:
        fh.write(plan.to_text())


def load_records(path) -> dict:
    """Read a records CSV back into {eps: [RunRecord, ...]}."""
    records: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RECORD_HEADER:
            raise ConfigurationError(f"{path}: unexpected header {reader.fieldnames}", key="records")
        for row in reader:
            mean = row["mean_evals_to_target"]
            rec = profiles.RunRecord(
                row["problem"],
                row["solver"],
                None if mean == "NA" else float(mean),
                int(row["n_replicates"]),
                int(row["n_solved"]),
                int(row["total_evals"]),
            )
            records.setdefault(float(row["eps"]), []).append(rec)
    return records


# ---------------------------------------------------------------------------
# Reports


@dataclass(frozen=True)
class SolverSummary:
    solver: str
    efficiency: float  # rho(1)
    robustness: float  # rho(tau_max)


def summarize(records: Sequence[profiles.RunRecord], tau_grid=None):
    """Per-solver efficiency and robustness plus the profile curves."""
    tau_grid = profiles.default_tau_grid() if tau_grid is None else tau_grid
    table = profiles.performance_ratios(records)
    curves = [profiles.profile_curve(table, s, tau_grid) for s in table.solvers]
    rows = [SolverSummary(c.solver, c.points[0][1], c.points[-1][1]) for c in curves]
    return rows, curves, table


def _summary_text(eps, rows, records) -> str:
    buf = io.StringIO()
    buf.write(f"eps = {eps_tag(eps)}\n")
    width = max(len(r.solver) for r in rows)
    buf.write(f"  {'solver':<{width}}  efficiency  robustness\n")
    for r in rows:
        buf.write(f"  {r.solver:<{width}}  {r.efficiency:10.4f}  {r.robustness:10.4f}\n")
    buf.write("  mean evaluations to target (problem, solver, evals, solved/replicates)\n")
    for rec in sorted(records, key=lambda r: (r.problem, r.solver)):
        mean = "unsolved" if rec.mean_evals_to_target is None else f"{rec.mean_evals_to_target:.1f}"
        buf.write(f"    {rec.problem}  {rec.solver}  {mean}  {rec.n_solved}/{rec.n_replicates}\n")
    return buf.getvalue()


def report(records: dict, out_dir) -> str:
    """Write ``profile_eps<tag>.csv/.svg`` per tolerance and ``summary.txt``.

    ``records`` maps eps to its RunRecords.  Pure: no solver is run.
    """
    if not records or not any(records.values()):
        raise ValueError("no run records to report")
    os.makedirs(out_dir, exist_ok=True)
    parts = []
    for eps in sorted(records, reverse=True):
        recs = records[eps]
        if not recs:
            continue
        rows, curves, _ = summarize(recs)
        stem = os.path.join(out_dir, f"profile_eps{eps_tag(eps)}")
        profiles.emit_profile_data(curves, stem, title=f"eps = {eps_tag(eps)}")
        parts.append(_summary_text(eps, rows, recs))
    text = "\n".join(parts)
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(text)
    return text


# ---------------------------------------------------------------------------
# Assumption checks


@dataclass(frozen=True)
class ValidationRow:
    check: str  # "law" or "pstp"
    law: str
    n: int
    gamma: float
    gamma_se: float
    mu: float
    mu_se: float
    mu_theory: float
    mu_approx: Optional[float]
    passed: bool
    tau: Optional[int] = None


def _validation_sampler(kind, n, rng):
    if kind == "coord_weighted":
        w = np.arange(1, n + 1, dtype=float)
        return make_sampler(kind, n, p=w / w.sum())
    if kind == "ortho_basis":
        q, r = np.linalg.qr(rng.standard_normal((n, n)))
        return make_sampler(kind, n, basis=q * np.sign(np.diag(r)))
    return make_sampler(kind, n)


def _brackets(estimate, se, target, k=4.0) -> bool:
    # exact equality covers laws whose estimate has zero variance
    return abs(estimate - target) <= k * se or math.isclose(estimate, target, rel_tol=1e-12, abs_tol=1e-15)


def validate_assumptions(
    n_list=(2, 3, 10, 50),
    laws=("sphere", "gaussian", "coord_uniform", "coord_weighted", "ortho_basis"),
    n_samples: int = 200_000,
    seed: int = 0,
    pstp_taus=(4, 16),
    pstp_dim: int = 20,
) -> list[ValidationRow]:
    """Monte-Carlo check of the second moment and of mu for each law and n.

    Each row passes when the gamma estimate brackets 1 and the mu estimate
    brackets the closed form, both within 4 standard errors.  Rows with
    ``check == "pstp"`` test E||mean of tau sphere directions||^2 = 1/tau.
    """
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    for kind in laws:
        if kind not in NON_ORACLE_KINDS:
            raise ConfigurationError(f"{kind} is not a random direction law", key="laws")
    rng = np.random.default_rng(seed)
    rows = []
    for kind in laws:
        for n in n_list:
            sampler = _validation_sampler(kind, n, rng)
            g = rng.standard_normal(n)
            gamma, gamma_se = distributions.gamma_check(sampler, n_samples, rng)
            inner, inner_se = distributions.mc_expected_abs_inner(sampler, g, n_samples, rng)
            norm = sampler.d_norm(g)
            mu, mu_se = inner / norm, inner_se / norm
            theory = sampler.theoretical_mu()
            approx = distributions.sphere_mu_approx(n) if kind == "sphere" else None
            ok = _brackets(gamma, gamma_se, 1.0) and _brackets(mu, mu_se, theory)
            rows.append(ValidationRow("law", kind, n, gamma, gamma_se, mu, mu_se, theory, approx, ok))
    sphere = make_sampler("sphere", pstp_dim)
    for tau in pstp_taus:
        m, se = distributions.averaged_direction_sq_norm(sphere, tau, n_samples, rng)
        ok = _brackets(m, se, 1.0 / tau)
        rows.append(
            ValidationRow("pstp", "sphere", pstp_dim, m, se, math.nan, math.nan, 1.0 / tau, None, ok, tau)
        )
    return rows


def validation_table(rows: Sequence[ValidationRow]) -> str:
    """Plain-text table; for pstp rows gamma is E||s_k||^2 against 1/tau."""
    lines = [
        f"{'check':<6} {'law':<14} {'n':>4} {'tau':>4} {'gamma':>10} {'se':>9} "
        f"{'mu':>10} {'se':>9} {'mu_exact':>10} {'mu_approx':>10}  result"
    ]
    for r in rows:
        tau = "-" if r.tau is None else str(r.tau)
        approx = "-" if r.mu_approx is None else f"{r.mu_approx:.6f}"
        mu = "-" if math.isnan(r.mu) else f"{r.mu:.6f}"
        mu_se = "-" if math.isnan(r.mu_se) else f"{r.mu_se:.2e}"
        lines.append(
            f"{r.check:<6} {r.law:<14} {r.n:>4} {tau:>4} {r.gamma:>10.6f} {r.gamma_se:>9.2e} "
            f"{mu:>10} {mu_se:>9} {r.mu_theory:>10.6f} {approx:>10}  {'pass' if r.passed else 'FAIL'}"
        )
    return "\n".join(lines) + "\n"
