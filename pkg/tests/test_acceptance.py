"""Acceptance checks, one test per criterion.

Each test reports a PASS/FAIL line (shown in the terminal summary) and then
asserts.  Ensemble experiments stop as soon as the target is met; this is
sound because STP iterates are monotone, which each test re-asserts on the
ensemble it ran.
"""

import math
import time

import numpy as np
import pytest

from stpopt import harness
from stpopt.distributions import (
    CoordinateSampler,
    GaussianSampler,
    NGDOracle,
    SphereSampler,
    averaged_direction_sq_norm,
    mc_expected_abs_inner,
    sphere_mu,
)
from stpopt.problems import CONVEX_BENCH, EvalCounter, chain_quadratic, convex_quadratic, level_set_radius, suite_load
from stpopt.profiles import RunRecord, aggregate, performance_ratios, profile_curve
from stpopt.solvers import SolverConfig, StoppingRule, iterate_ensemble, run
from stpopt.stepsizes import Fixed, GapLinear, GapSqrt, InvSqrt, SolutionFree, StepContext

SEEDS = 20


def _gap0(p):
    return float(p.func(p.x0)) - p.f_star


def _ensemble(p, cfg, seed, done, k_max):
    """Run SEEDS lockstep chains until ``done(k, X, F)`` or k == k_max."""
    prev = None
    for k, X, F in iterate_ensemble(p, cfg, SEEDS, np.random.default_rng(seed)):
        if prev is not None:
            assert np.all(F <= prev)
        prev = F
        if done(k, X, F) or k >= k_max:
            return k, X, F


class TestAcceptance:
    def test_01_monotonicity(self, record):
        t0 = time.perf_counter()
        configs = {
            "stp": lambda n: SolverConfig("stp", SphereSampler(n), InvSqrt(1.0)),
            "pstp": lambda n: SolverConfig("pstp", SphereSampler(n), InvSqrt(1.0), tau=8),
            "dds": lambda n: SolverConfig("dds"),
        }
        violations = runs = 0
        for p in suite_load("smoke"):
            stop = StoppingRule(1e-300, p.f_star, max_evals=10**9, max_iters=500)
            for name, make in configs.items():
                for seed in range(5):
                    tr = run(p, make(p.dim), stop, seed)
                    f = np.array(tr.f)
                    violations += int(np.sum(f[1:] > f[:-1]))
                    runs += 1
        elapsed = time.perf_counter() - t0
        ok = violations == 0 and runs == 45 and elapsed < 10
        record("AC1 monotonicity", ok, f"{runs} runs, {violations} increases, {elapsed:.1f}s")
        assert ok

    def test_02_direction_constants(self, record):
        t0 = time.perf_counter()
        rng = np.random.default_rng(2)
        worst = 0.0
        for n in (2, 10, 50):
            w = np.arange(1, n + 1, dtype=float)
            g = rng.standard_normal(n)
            for sampler in (GaussianSampler(n), CoordinateSampler(n), CoordinateSampler(n, p=w / w.sum())):
                est, se = mc_expected_abs_inner(sampler, g, 10**6, rng)
                target = sampler.theoretical_mu() * sampler.d_norm(g)
                worst = max(worst, abs(est - target) / se)
        for n, exact in ((2, 2 / math.pi), (3, 0.5)):
            assert sphere_mu(n) == pytest.approx(exact, rel=1e-12)
            e1 = np.eye(n)[0]
            est, se = mc_expected_abs_inner(SphereSampler(n), e1, 10**6, rng)
            worst = max(worst, abs(est - exact) / se)
        elapsed = time.perf_counter() - t0
        ok = worst <= 4 and elapsed < 60
        record("AC2 direction constants", ok, f"max |est - target| = {worst:.2f} se, {elapsed:.1f}s")
        assert ok

    def test_03_one_step_decrease(self, record):
        t0 = time.perf_counter()
        p = chain_quadratic(10)
        s = SphereSampler(10)
        alpha = 0.1
        cfg = SolverConfig("stp", s, Fixed(alpha))
        steps = iterate_ensemble(p, cfg, 10**5, np.random.default_rng(3))
        _, _, F0 = next(steps)
        _, _, F1 = next(steps)
        f_x = F0[0]
        mean, se = F1.mean(), F1.std(ddof=1) / math.sqrt(F1.size)
        bound = f_x - s.theoretical_mu() * alpha * np.linalg.norm(p.gradient(p.x0)) + p.lipschitz_L / 2 * alpha**2
        elapsed = time.perf_counter() - t0
        ok = mean <= bound + 4 * se and elapsed < 30
        record("AC3 one-step decrease", ok, f"mean {mean:.6f} <= {bound:.6f} + 4*{se:.1e}, {elapsed:.1f}s")
        assert ok

    def test_04_strongly_convex_rate(self, record):
        t0 = time.perf_counter()
        p = chain_quadratic(25)
        s = SphereSampler(25)
        mu = s.theoretical_mu()
        L, lam = p.lipschitz_L, p.strong_convexity_lambda
        cfg = SolverConfig("stp", s, GapSqrt(mu_D=mu, L=L, lam=lam, f_star=p.f_star, theta=1.0))
        gap0 = _gap0(p)
        eps = 1e-3 * gap0
        K = math.ceil(L / (lam * mu**2) * math.log(gap0 / eps))
        k, _, F = _ensemble(p, cfg, 4, lambda k, X, F: np.mean(F - p.f_star) <= eps, K)
        gap = np.mean(F - p.f_star)
        elapsed = time.perf_counter() - t0
        ok = gap <= eps and k <= K and elapsed < 60
        record("AC4 strongly convex rate", ok, f"mean gap {gap:.3e} <= {eps:.3e} at k={k} (K={K}), {elapsed:.1f}s")
        assert ok

    def test_05_nonconvex_rate(self, record):
        t0 = time.perf_counter()
        p = chain_quadratic(50)
        s = SphereSampler(50)
        mu, L = s.theoretical_mu(), p.lipschitz_L
        gap0 = _gap0(p)
        a0 = 8**0.25 * math.sqrt(gap0 / L)
        cfg = SolverConfig("stp", s, InvSqrt(a0))
        details, ok = [], True
        for eps in (0.05, 0.025):
            K = math.ceil(2 * (math.sqrt(2) * gap0 / a0 + L * a0 / 2) ** 2 / (mu**2 * eps**2))
            best = [math.inf]

            def done(k, X, F):
                best[0] = min(best[0], float(np.mean(np.linalg.norm(p.gradient(X), axis=1))))
                return best[0] <= eps

            k, _, _ = _ensemble(p, cfg, 5, done, K)
            ok &= best[0] <= eps and k <= K
            details.append(f"eps={eps}: min mean |grad| {best[0]:.4f} at k={k} (K={K})")
        elapsed = time.perf_counter() - t0
        ok &= elapsed < 180
        record("AC5 nonconvex rate", ok, "; ".join(details) + f", {elapsed:.1f}s")
        assert ok

    def test_06_convex_variable_stepsize(self, record):
        t0 = time.perf_counter()
        p = convex_quadratic(10)
        s = SphereSampler(10)
        mu, L = s.theoretical_mu(), p.lipschitz_L
        R0, r0 = level_set_radius(p), _gap0(p)
        eps = 1e-2
        cfg = SolverConfig("stp", s, GapLinear(mu / (R0 * L), p.f_star))
        k_bound = math.ceil(2 * R0**2 * L / mu**2 * (1 / eps - 1 / r0))
        k, _, F = _ensemble(p, cfg, 6, lambda k, X, F: np.mean(F - p.f_star) <= 1.1 * eps, k_bound)
        gap = np.mean(F - p.f_star)
        elapsed = time.perf_counter() - t0
        ok = gap <= 1.1 * eps and k <= k_bound and elapsed < 60
        record("AC6 convex variable stepsize", ok, f"mean gap {gap:.4f} <= {1.1 * eps:.3f} at k={k} (bound {k_bound}), {elapsed:.1f}s")
        assert ok

    def test_07_solution_free_bias(self, record):
        t0 = time.perf_counter()
        p = chain_quadratic(10)
        t = 1e-4
        sched = SolutionFree(L=p.lipschitz_L, t=t)
        rng = np.random.default_rng(7)
        sampler = SphereSampler(10)
        counter = EvalCounter()
        worst = 0.0
        for _ in range(1000):
            x = rng.uniform(-2, 2, 10)
            s = sampler.sample(rng)
            ctx = StepContext(0, p.evaluate(x, counter), x, s, lambda y: p.evaluate(y, counter))
            worst = max(worst, abs(sched.alpha(ctx) - abs(p.gradient(x) @ s) / p.lipschitz_L))
        elapsed = time.perf_counter() - t0
        ok = worst <= t / 2 and elapsed < 5
        record("AC7 solution-free bias", ok, f"max bias {worst:.3e} <= {t / 2:.1e}, {elapsed:.1f}s")
        assert ok

    def test_08_pstp_averaging(self, record):
        t0 = time.perf_counter()
        details, ok = [], True
        for tau in (4, 16):
            est, se = averaged_direction_sq_norm(SphereSampler(20), tau, 10**5, np.random.default_rng(tau))
            ok &= abs(est - 1 / tau) <= 4 * se
            details.append(f"tau={tau}: {est:.5f} vs {1 / tau:.5f} (se {se:.1e})")
        elapsed = time.perf_counter() - t0
        ok &= elapsed < 30
        record("AC8 averaged directions", ok, "; ".join(details) + f", {elapsed:.1f}s")
        assert ok

    def test_09_profile_example(self, record):
        t0 = time.perf_counter()
        recs = [RunRecord("p1", "a", 10.0, 1, 1), RunRecord("p1", "b", 20.0, 1, 1),
                RunRecord("p2", "a", 30.0, 1, 1), RunRecord("p2", "b", 15.0, 1, 1)]
        table = performance_ratios(recs)
        curves = [profile_curve(table, s, np.array([1.0, 2.0])) for s in ("a", "b")]
        elapsed = time.perf_counter() - t0
        ok = (
            np.array_equal(table.ratios, [[1.0, 2.0], [2.0, 1.0]])
            and all(np.array_equal(c.rho, [0.5, 1.0]) for c in curves)
            and elapsed < 1
        )
        record("AC9 profile example", ok, f"r={table.ratios.tolist()}, rho={[c.rho.tolist() for c in curves]}")
        assert ok

    def test_10_ordering_against_dds(self, record):
        t0 = time.perf_counter()
        by_name = {p.name: p for p in suite_load("all")}
        methods = ("stp:sphere:solution_free:t=1e-4", "rgf:sphere", "dds:alpha0=1")
        means = {}
        for name in CONVEX_BENCH:
            p = by_name[name]
            stop = StoppingRule(1e-3, p.f_star)
            for text in methods:
                cfg = harness.parse_method(text).build(p, eps=1e-3)
                hits = [run(p, cfg, stop, harness.run_seed(0, name, text, r)).evals_to_target for r in range(10)]
                means[name, text] = aggregate(name, text, hits).mean_evals_to_target

        def beats(a, b):
            return a is not None and (b is None or a < b)

        wins = {m: sum(beats(means[n, m], means[n, methods[2]]) for n in CONVEX_BENCH) for m in methods[:2]}
        elapsed = time.perf_counter() - t0
        ok = all(w >= 4 for w in wins.values()) and elapsed < 300
        record("AC10 ordering against DDS", ok, f"wins of 6: STP-vs {wins[methods[0]]}, RGF {wins[methods[1]]}, {elapsed:.1f}s")
        assert ok

    def test_11_normalized_gradient_descent(self, record):
        t0 = time.perf_counter()
        p = convex_quadratic(10, x0=np.full(10, 100.0))
        alpha = 0.5 / p.lipschitz_L
        cfg = SolverConfig("stp", NGDOracle(10), Fixed(alpha))
        tr = run(p, cfg, StoppingRule(1e-300, p.f_star, max_iters=200), 0)
        f = np.array(tr.f)
        elapsed = time.perf_counter() - t0
        ok = len(f) == 201 and bool(np.all(f[1:] < f[:-1])) and elapsed < 1
        record("AC11 normalized gradient descent", ok, f"{len(f) - 1} iterations, all strict decreases: {bool(np.all(f[1:] < f[:-1]))}")
        assert ok
