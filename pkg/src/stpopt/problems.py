"""Smooth test objectives with evaluation counting.

Every objective is written to accept points of shape ``(..., n)`` so that
ensembles of iterates can be evaluated in one call.  Reference values
(``f_star``, the gradient Lipschitz constant ``L`` and the strong convexity
modulus) are stored with each problem; ``None`` means "unknown" and is
written as ``NA`` in the manifest.

The MGH-style members follow the formulas and starting points of
More, Garbow & Hillstrom (1981), "Testing unconstrained optimization
software", ACM TOMS 7(1).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg, optimize, special

from .errors import UnsupportedOperation

CONVEXITY_CLASSES = ("nonconvex", "convex", "strongly_convex")
SUITE_NAMES = ("smoke", "nonconvex", "convex", "strongly_convex", "all")


@dataclass
class EvalCounter:
    """Number of objective evaluations charged to one run."""

    count: int = 0

    def increment(self, k: int = 1) -> None:
        self.count += k


@dataclass(frozen=True, eq=False)
class Problem:
    name: str
    dim: int
    x0: np.ndarray
    func: Callable[[np.ndarray], np.ndarray]
    grad_func: Optional[Callable[[np.ndarray], np.ndarray]] = None
    f_star: Optional[float] = None
    lipschitz_L: Optional[float] = None
    strong_convexity_lambda: Optional[float] = None
    convexity_class: str = "nonconvex"
    x_star: Optional[np.ndarray] = None
    hessian: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.convexity_class not in CONVEXITY_CLASSES:
            raise ValueError(f"unknown convexity class {self.convexity_class!r}")
        x0 = np.array(self.x0, dtype=float)
        if x0.shape != (self.dim,):
            raise ValueError(f"x0 has shape {x0.shape}, expected ({self.dim},)")
        x0.flags.writeable = False
        object.__setattr__(self, "x0", x0)

    @property
    def has_gradient(self) -> bool:
        return self.grad_func is not None

    def _check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ValueError(
                f"{self.name}: point has shape {x.shape}, expected last axis {self.dim}"
            )
        if not np.all(np.isfinite(x)):
            raise ValueError(f"{self.name}: point has non-finite components")
        return x

    def evaluate(self, x, counter: EvalCounter) -> float:
        """Return f(x) and charge one evaluation to ``counter``."""
        x = self._check_point(x)
        if x.ndim != 1:
            raise ValueError(f"{self.name}: evaluate takes a single point, use evaluate_batch")
        counter.count += 1
        return float(self.func(x))

    def evaluate_batch(self, xs, counter: EvalCounter) -> np.ndarray:
        """Evaluate a stack of points of shape (m, n); charges m evaluations."""
        xs = self._check_point(xs)
        if xs.ndim != 2:
            raise ValueError(f"{self.name}: evaluate_batch expects shape (m, {self.dim})")
        counter.count += xs.shape[0]
        return np.asarray(self.func(xs), dtype=float)

    def gradient(self, x) -> np.ndarray:
        """Analytic gradient. Not charged to any evaluation counter."""
        if self.grad_func is None:
            raise UnsupportedOperation(f"{self.name} has no analytic gradient")
        x = self._check_point(x)
        return np.asarray(self.grad_func(x), dtype=float)


def finite_diff_grad(problem: Problem, x, h: float, counter: EvalCounter) -> np.ndarray:
    """Central-difference gradient; charges 2 * dim evaluations."""
    if not h > 0:
        raise ValueError(f"h must be positive, got {h!r}")
    x = problem._check_point(x)
    n = problem.dim
    g = np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        g[i] = (problem.evaluate(x + e, counter) - problem.evaluate(x - e, counter)) / (2 * h)
    return g


# ---------------------------------------------------------------------------
# Quadratics


def _tridiag_matvec(x):
    # A = tridiag(-1, 2, -1) applied along the last axis
    y = 2.0 * x
    y[..., 1:] -= x[..., :-1]
    y[..., :-1] -= x[..., 1:]
    return y


def chain_eigenvalues(n: int) -> np.ndarray:
    k = np.arange(1, n + 1)
    return 2.0 - 2.0 * np.cos(k * np.pi / (n + 1))


def chain_quadratic(n: int) -> Problem:
    """f(x) = x1^2/2 + sum (x_{i+1} - x_i)^2 / 2 + xn^2/2 - x1, started at 0."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")

    def f(x):
        val = 0.5 * x[..., 0] ** 2 + 0.5 * x[..., -1] ** 2 - x[..., 0]
        if n > 1:
            val = val + 0.5 * np.sum(np.diff(x, axis=-1) ** 2, axis=-1)
        return val

    def grad(x):
        g = _tridiag_matvec(x)
        g[..., 0] -= 1.0
        return g

    banded = np.zeros((3, n))
    banded[0, 1:] = -1.0
    banded[1, :] = 2.0
    banded[2, :-1] = -1.0
    rhs = np.zeros(n)
    rhs[0] = 1.0
    x_star = linalg.solve_banded((1, 1), banded, rhs)
    eig = chain_eigenvalues(n)
    hess = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    return Problem(
        name=f"chain_quadratic_{n}",
        dim=n,
        x0=np.zeros(n),
        func=f,
        grad_func=grad,
        f_star=float(-0.5 * x_star[0]),
        lipschitz_L=float(eig[-1]),
        strong_convexity_lambda=float(eig[0]),
        convexity_class="strongly_convex",
        x_star=x_star,
        hessian=hess,
    )


def _random_orthogonal(n, rng):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def convex_quadratic(
    n: int,
    eigenvalues=None,
    x_star=None,
    x0=None,
    f_star: float = 0.0,
    seed: int = 0,
    name: Optional[str] = None,
) -> Problem:
    """Rotated quadratic 0.5 (x - x*)^T H (x - x*) + f* with prescribed spectrum.

    By default the eigenvalues are ``linspace(1, 10, n)``, x* is the all-ones
    vector and x0 is the origin.  The rotation is drawn from ``seed`` so that
    the problem is not axis aligned.
    """
    eig = np.linspace(1.0, 10.0, n) if eigenvalues is None else np.asarray(eigenvalues, float)
    if eig.shape != (n,) or np.any(eig <= 0):
        raise ValueError("eigenvalues must be n positive numbers")
    q = _random_orthogonal(n, np.random.default_rng(seed))
    hess = (q * eig) @ q.T
    hess = 0.5 * (hess + hess.T)
    c = np.ones(n) if x_star is None else np.asarray(x_star, float)
    start = np.zeros(n) if x0 is None else np.asarray(x0, float)

    def f(x):
        d = x - c
        return 0.5 * np.einsum("...i,ij,...j->...", d, hess, d) + f_star

    def grad(x):
        return (x - c) @ hess

    return Problem(
        name=name or f"convex_quadratic_{n}",
        dim=n,
        x0=start,
        func=f,
        grad_func=grad,
        f_star=float(f_star),
        lipschitz_L=float(eig.max()),
        strong_convexity_lambda=float(eig.min()),
        convexity_class="strongly_convex",
        x_star=c,
        hessian=hess,
    )


def level_set_radius(problem: Problem) -> float:
    """Largest Euclidean distance to x* over the level set {f <= f(x0)}.

    Closed form for quadratics: sqrt(2 (f(x0) - f*) / lambda_min(H)).
    """
    if problem.hessian is None or problem.f_star is None:
        raise UnsupportedOperation(f"{problem.name}: level-set radius needs a quadratic")
    lam_min = float(np.linalg.eigvalsh(problem.hessian)[0])
    gap = float(problem.func(problem.x0)) - problem.f_star
    return math.sqrt(2.0 * gap / lam_min)


def least_squares(n: int, m: Optional[int] = None, seed: int = 1) -> Problem:
    """0.5 ||J x - b||^2 with a seeded Gaussian J of shape (m, n), m = 2n."""
    m = 2 * n if m is None else m
    rng = np.random.default_rng(seed)
    jac = rng.standard_normal((m, n)) / math.sqrt(m)
    b = rng.standard_normal(m)
    x_star, *_ = np.linalg.lstsq(jac, b, rcond=None)
    sv = np.linalg.svd(jac, compute_uv=False)

    def f(x):
        r = x @ jac.T - b
        return 0.5 * np.sum(r * r, axis=-1)

    def grad(x):
        return (x @ jac.T - b) @ jac

    r_star = jac @ x_star - b
    return Problem(
        name=f"least_squares_{n}",
        dim=n,
        x0=np.zeros(n),
        func=f,
        grad_func=grad,
        f_star=float(0.5 * r_star @ r_star),
        lipschitz_L=float(sv[0] ** 2),
        strong_convexity_lambda=float(sv[-1] ** 2),
        convexity_class="strongly_convex",
        x_star=x_star,
        hessian=jac.T @ jac,
    )


def log_sum_exp(n: int, m: Optional[int] = None, seed: int = 2) -> Problem:
    """log sum_i exp(<a_i, x> - b_i) over a symmetric set of rows {a_i} = {+-a_j}.

    Symmetry keeps the origin inside the convex hull of the rows, so the
    objective is bounded below.  L = ||A||_2^2 / 2 bounds the Hessian
    A^T (diag(p) - p p^T) A; f* is found by Newton's method at construction.
    """
    m = 2 * n if m is None else m
    rng = np.random.default_rng(seed)
    half = rng.standard_normal((m, n)) / math.sqrt(n)
    a = np.vstack([half, -half])
    b = rng.standard_normal(2 * m)

    def f(x):
        z = x @ a.T - b
        top = np.max(z, axis=-1, keepdims=True)
        return top[..., 0] + np.log(np.sum(np.exp(z - top), axis=-1))

    def grad(x):
        z = x @ a.T - b
        p = np.exp(z - special.logsumexp(z, axis=-1, keepdims=True))
        return p @ a

    def hess(x):
        p = np.exp(a @ x - b - special.logsumexp(a @ x - b))
        return a.T @ ((p[:, None]) * a) - np.outer(a.T @ p, a.T @ p)

    res = optimize.minimize(
        f, np.zeros(n), jac=grad, hess=hess, method="trust-exact", options={"gtol": 1e-13}
    )
    return Problem(
        name=f"log_sum_exp_{n}",
        dim=n,
        x0=np.zeros(n),
        func=f,
        grad_func=grad,
        f_star=float(res.fun),
        lipschitz_L=float(np.linalg.norm(a, 2) ** 2 / 2),
        strong_convexity_lambda=None,
        convexity_class="convex",
        x_star=res.x,
    )


# ---------------------------------------------------------------------------
# MGH-style nonconvex problems


def rosenbrock(n: int = 2) -> Problem:
    """Extended Rosenbrock (MGH 21); n must be even."""
    if n < 2 or n % 2:
        raise ValueError(f"extended Rosenbrock needs an even n >= 2, got {n}")

    def f(x):
        odd, even = x[..., 0::2], x[..., 1::2]
        return np.sum(100.0 * (even - odd**2) ** 2 + (1.0 - odd) ** 2, axis=-1)

    def grad(x):
        odd, even = x[..., 0::2], x[..., 1::2]
        t = even - odd**2
        g = np.empty_like(x)
        g[..., 0::2] = -400.0 * odd * t - 2.0 * (1.0 - odd)
        g[..., 1::2] = 200.0 * t
        return g

    x0 = np.tile([-1.2, 1.0], n // 2)
    return Problem(
        name=f"rosenbrock_{n}",
        dim=n,
        x0=x0,
        func=f,
        grad_func=grad,
        f_star=0.0,
        convexity_class="nonconvex",
        x_star=np.ones(n),
    )


_BEALE_Y = np.array([1.5, 2.25, 2.625])


def beale() -> Problem:
    """Beale function (MGH 5), n = 2."""
    powers = np.arange(1, 4)

    def residuals(x):
        x1 = x[..., 0:1]
        x2 = x[..., 1:2]
        return _BEALE_Y - x1 * (1.0 - x2**powers)

    def f(x):
        return np.sum(residuals(x) ** 2, axis=-1)

    def grad(x):
        r = residuals(x)
        x1 = x[..., 0:1]
        x2 = x[..., 1:2]
        d1 = -(1.0 - x2**powers)
        d2 = x1 * powers * x2 ** (powers - 1)
        return np.concatenate(
            [2 * np.sum(r * d1, axis=-1, keepdims=True), 2 * np.sum(r * d2, axis=-1, keepdims=True)],
            axis=-1,
        )

    return Problem(
        name="beale_2",
        dim=2,
        x0=np.array([1.0, 1.0]),
        func=f,
        grad_func=grad,
        f_star=0.0,
        convexity_class="nonconvex",
        x_star=np.array([3.0, 0.5]),
    )


def broyden_tridiagonal(n: int) -> Problem:
    """Broyden tridiagonal function (MGH 30), started at -1."""

    def residuals(x):
        r = (3.0 - 2.0 * x) * x + 1.0
        r[..., 1:] -= x[..., :-1]
        r[..., :-1] -= 2.0 * x[..., 1:]
        return r

    def f(x):
        return np.sum(residuals(x) ** 2, axis=-1)

    def grad(x):
        r = residuals(x)
        g = (3.0 - 4.0 * x) * r
        g[..., :-1] -= r[..., 1:]
        g[..., 1:] -= 2.0 * r[..., :-1]
        return 2.0 * g

    return Problem(
        name=f"broyden_tridiagonal_{n}",
        dim=n,
        x0=-np.ones(n),
        func=f,
        grad_func=grad,
        f_star=0.0,
        convexity_class="nonconvex",
    )


def _prod_except(x):
    # product of all entries but one, along the last axis, without division
    ones = np.ones(x.shape[:-1] + (1,))
    left = np.cumprod(np.concatenate([ones, x[..., :-1]], axis=-1), axis=-1)
    right = np.flip(
        np.cumprod(np.concatenate([ones, np.flip(x, -1)[..., :-1]], axis=-1), axis=-1), -1
    )
    return left * right


def brown_almost_linear(n: int) -> Problem:
    """Brown almost-linear function (MGH 27), started at 0.5."""

    def residuals(x):
        s = np.sum(x, axis=-1, keepdims=True)
        r = x + s - (n + 1.0)
        r[..., -1] = np.prod(x, axis=-1) - 1.0
        return r

    def f(x):
        return np.sum(residuals(x) ** 2, axis=-1)

    def grad(x):
        r = residuals(x)
        lin = r[..., :-1]
        g = np.sum(lin, axis=-1, keepdims=True) + r[..., -1:] * _prod_except(x)
        g[..., :-1] += lin
        return 2.0 * g

    return Problem(
        name=f"brown_almost_linear_{n}",
        dim=n,
        x0=np.full(n, 0.5),
        func=f,
        grad_func=grad,
        f_star=0.0,
        convexity_class="nonconvex",
        x_star=np.ones(n),
    )


def linear_full_rank(n: int, m: Optional[int] = None) -> Problem:
    """Linear function, full rank (MGH 32); Hessian 2I, f* = m - n."""
    m = 2 * n if m is None else m
    if m < n:
        raise ValueError("linear full rank needs m >= n")

    def f(x):
        s = np.sum(x, axis=-1, keepdims=True)
        head = x - 2.0 * s / m - 1.0
        tail = -2.0 * s[..., 0] / m - 1.0
        return np.sum(head * head, axis=-1) + (m - n) * tail * tail

    def grad(x):
        s = np.sum(x, axis=-1, keepdims=True)
        head = x - 2.0 * s / m - 1.0
        tail = -2.0 * s / m - 1.0
        common = np.sum(head, axis=-1, keepdims=True) + (m - n) * tail
        return 2.0 * (head - 2.0 * common / m)

    return Problem(
        name=f"linear_full_rank_{n}",
        dim=n,
        x0=np.ones(n),
        func=f,
        grad_func=grad,
        f_star=float(m - n),
        lipschitz_L=2.0,
        strong_convexity_lambda=2.0,
        convexity_class="strongly_convex",
        x_star=-np.ones(n),
        hessian=2.0 * np.eye(n),
    )


# ---------------------------------------------------------------------------
# Suites


def _all_problems():
    return [
        chain_quadratic(10),
        chain_quadratic(25),
        chain_quadratic(50),
        chain_quadratic(100),
        convex_quadratic(10),
        convex_quadratic(50),
        least_squares(10),
        log_sum_exp(10),
        linear_full_rank(10),
        linear_full_rank(50),
        rosenbrock(2),
        rosenbrock(10),
        beale(),
        broyden_tridiagonal(10),
        broyden_tridiagonal(50),
        brown_almost_linear(10),
    ]


_SMOKE = ("chain_quadratic_10", "rosenbrock_2", "convex_quadratic_10")

# Six convex members with known L, usable with L-dependent schedules, whose
# runs finish inside the default budget for every baseline.
CONVEX_BENCH = (
    "chain_quadratic_10",
    "convex_quadratic_10",
    "convex_quadratic_50",
    "least_squares_10",
    "linear_full_rank_10",
    "linear_full_rank_50",
)


def suite_load(name: str) -> list[Problem]:
    if name not in SUITE_NAMES:
        raise ValueError(f"unknown suite {name!r}; expected one of {', '.join(SUITE_NAMES)}")
    problems = _all_problems()
    if name == "all":
        return problems
    if name == "smoke":
        by_name = {p.name: p for p in problems}
        return [by_name[k] for k in _SMOKE]
    if name == "convex":
        return [p for p in problems if p.convexity_class != "nonconvex"]
    return [p for p in problems if p.convexity_class == name]


def _fmt(value) -> str:
    return "NA" if value is None else repr(float(value))


def suite_manifest(problems) -> str:
    """CSV manifest: name, dim, f_star, L, lambda, convexity_class."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["name", "dim", "f_star", "L", "lambda", "convexity_class"])
    for p in problems:
        writer.writerow(
            [
                p.name,
                p.dim,
                _fmt(p.f_star),
                _fmt(p.lipschitz_L),
                _fmt(p.strong_convexity_lambda),
                p.convexity_class,
            ]
        )
    return buf.getvalue()
