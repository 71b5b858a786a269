import csv
import math
import os

import numpy as np
import pytest

from stpopt import cli, harness
from stpopt.errors import ConfigurationError
from stpopt.problems import chain_quadratic, rosenbrock
from stpopt.stepsizes import Fixed, GapSqrt, SolutionFree

CHEAP = ("stp:sphere:inv_sqrt:alpha0=1", "dds:alpha0=1")


def _plan(tmp_path, **kw):
    base = dict(suite="smoke", methods=CHEAP, epsilons=["1e-1"], replicates=2, max_evals=3000, out_dir=tmp_path)
    base.update(kw)
    return harness.parse_plan(**base)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestMethodGrammar:
    def test_stp(self):
        m = harness.parse_method("stp:sphere:inv_sqrt:alpha0=1")
        assert (m.method, m.sampler, m.schedule, m.params) == ("stp", "sphere", "inv_sqrt", (("alpha0", 1.0),))

    def test_eps_scaled_alpha(self):
        m = harness.parse_method("stp:sphere:fixed:alpha=0.1*eps")
        assert m.depends_on_eps
        cfg = m.build(chain_quadratic(4), eps=1e-3)
        assert isinstance(cfg.schedule, Fixed)
        assert cfg.schedule.alpha_value == pytest.approx(1e-4, rel=1e-15)
        with pytest.raises(ConfigurationError):
            m.build(chain_quadratic(4))

    def test_auto_constants(self):
        p = chain_quadratic(9)
        cfg = harness.parse_method("stp:sphere:gap_sqrt:theta=0.5").build(p)
        s = cfg.schedule
        assert isinstance(s, GapSqrt)
        assert (s.L, s.lam, s.f_star, s.theta) == (p.lipschitz_L, p.strong_convexity_lambda, p.f_star, 0.5)
        assert s.mu_D == cfg.sampler.theoretical_mu()
        sf = harness.parse_method("stp:sphere:solution_free:L=7").build(p).schedule
        assert isinstance(sf, SolutionFree) and sf.L == 7.0 and sf.t == 1e-4

    def test_unknown_constant_rejected(self):
        with pytest.raises(ConfigurationError) as info:
            harness.parse_method("stp:sphere:solution_free").build(rosenbrock(2))
        assert info.value.key == "L"

    def test_pstp_rgf_dds(self):
        p = chain_quadratic(6)
        assert harness.parse_method("pstp:sphere:inv_sqrt:alpha0=1,tau=8").build(p).tau == 8
        rgf = harness.parse_method("rgf:sphere:mu=1e-3,radius=unit").build(p)
        assert (rgf.mu, rgf.rgf_radius, rgf.rgf_alpha(6)) == (1e-3, "unit", 1 / 40)
        assert harness.parse_method("rgf").build(p).sampler.kind == "sphere"
        assert harness.parse_method("dds").build(p).alpha0 == 1.0
        assert harness.parse_method("dds:alpha0=0.5").build(p).alpha0 == 0.5

    def test_nsgd_noise(self):
        cfg = harness.parse_method("stp:oracle_nsgd:fixed:alpha=0.05,noise_scale=0.2").build(chain_quadratic(3))
        assert cfg.sampler.noise_scale == 0.2

    @pytest.mark.parametrize(
        "text,key",
        [
            ("newton:sphere", "method"),
            ("stp:sphere", "method"),
            ("stp:levy:fixed:alpha=1", "sampler"),
            ("stp:sphere:armijo", "stepsize"),
            ("stp:sphere:fixed:beta=1", "beta"),
            ("stp:sphere:fixed:alpha=one", "alpha"),
            ("stp:sphere:fixed:alpha=1,alpha=2", "alpha"),
            ("pstp:sphere:fixed:alpha=1,tau=2.5", "tau"),
            ("pstp:sphere:fixed:alpha=1,tau=0", "tau"),
            ("rgf:gaussian", "sampler"),
            ("rgf:sphere:radius=big", "radius"),
            ("stp:coord_weighted:fixed:alpha=1", "sampler"),
            ("dds:sphere", "method"),
            ("stp:sphere:fixed:alpha", "method"),
        ],
    )
    def test_errors_name_the_key(self, text, key):
        with pytest.raises(ConfigurationError) as info:
            harness.parse_method(text)
        assert info.value.key == key

    def test_eps_tag(self):
        assert harness.eps_tag(1e-3) == "1e-3"
        assert harness.eps_tag(0.1) == "1e-1"
        assert harness.eps_tag(0.025) == "2.5e-2"
        assert harness.eps_tag(1e-5) == "1e-5"


class TestParsePlan:
    def test_flags(self):
        args = cli.build_parser().parse_args(
            ["run", "--suite", "smoke", "--method", "stp:sphere:inv_sqrt:alpha0=1", "--eps", "1e-3", "--seeds", "10"]
        )
        plan = harness.parse_plan(args)
        assert plan.suite == "smoke" and plan.epsilons == (1e-3,) and plan.replicates == 10
        assert plan.max_evals == 100_000
        assert [m.text for m in plan.methods] == ["stp:sphere:inv_sqrt:alpha0=1"]

    def test_defaults(self):
        plan = harness.parse_plan()
        assert plan.epsilons == (1e-1, 1e-3, 1e-5) and plan.replicates == 10
        assert [m.text for m in plan.methods] == list(harness.DEFAULT_METHODS)

    def test_negative_eps(self):
        args = cli.build_parser().parse_args(["run", "--eps", "-1"])
        with pytest.raises(ConfigurationError) as info:
            harness.parse_plan(args)
        assert info.value.key == "eps"

    @pytest.mark.parametrize(
        "kw,key",
        [
            ({"replicates": "0"}, "seeds"),
            ({"max_evals": "ten"}, "max_evals"),
            ({"suite": "huge"}, "suite"),
            ({"epsilons": ["abc"]}, "eps"),
            ({"methods": ["dds", "dds"]}, "method"),
        ],
    )
    def test_bad_values(self, kw, key):
        with pytest.raises(ConfigurationError) as info:
            harness.parse_plan(**kw)
        assert info.value.key == key

    def test_plan_file(self, tmp_path):
        path = tmp_path / "plan.txt"
        path.write_text(
            "# comment\nsuite=convex\nmethod=rgf:sphere\nmethod=dds:alpha0=1\neps=1e-1,1e-3\n"
            "seeds=3\nmax-evals=500\nmaster_seed=9\nout=/tmp/x\n"
        )
        plan = harness.parse_plan(plan_file=path)
        assert plan.suite == "convex" and plan.epsilons == (0.1, 0.001)
        assert (plan.replicates, plan.max_evals, plan.master_seed) == (3, 500, 9)
        assert [m.text for m in plan.methods] == ["rgf:sphere", "dds:alpha0=1"]
        # explicit flags win over the file
        args = cli.build_parser().parse_args(["run", "--plan", str(path), "--seeds", "4"])
        assert harness.parse_plan(args).replicates == 4

    def test_plan_file_roundtrip(self, tmp_path):
        plan = _plan(tmp_path)
        path = tmp_path / "p.txt"
        path.write_text(plan.to_text())
        assert harness.parse_plan(plan_file=path) == plan

    def test_plan_file_unknown_key(self, tmp_path):
        path = tmp_path / "plan.txt"
        path.write_text("suite=smoke\ncolour=blue\n")
        with pytest.raises(ConfigurationError) as info:
            harness.parse_plan(plan_file=path)
        assert info.value.key == "colour"

    def test_plan_file_malformed(self, tmp_path):
        path = tmp_path / "plan.txt"
        path.write_text("suite smoke\n")
        with pytest.raises(ConfigurationError):
            harness.parse_plan(plan_file=path)


class TestRunMatrix:
    def test_counts(self, tmp_path):
        plan = _plan(tmp_path)
        result = harness.run_matrix(plan)
        traces = [f for _, _, files in os.walk(tmp_path / "traces") for f in files]
        assert len(traces) == 12
        assert len(result.records[0.1]) == 6
        assert len(_read(tmp_path / "records.csv")) == 6
        assert len(_read(tmp_path / "runs.csv")) == 12

    def test_deterministic(self, tmp_path):
        harness.run_matrix(_plan(tmp_path / "a"))
        harness.run_matrix(_plan(tmp_path / "b"))
        for name in ("records.csv", "runs.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_budget_conservation_and_overshoot(self, tmp_path):
        plan = _plan(tmp_path, epsilons=["1e-5"], max_evals=400)
        harness.run_matrix(plan)
        records = _read(tmp_path / "records.csv")
        runs = _read(tmp_path / "runs.csv")
        trace_total = 0
        for r in runs:
            with open(tmp_path / r["trace"]) as fh:
                last = fh.read().splitlines()[-1].split(",")
            assert int(last[2]) == int(r["evals"])
            trace_total += int(last[2])
            n = 10 if r["problem"].endswith("_10") else 2
            assert int(r["evals"]) < 400 + (2 * n if r["method"].startswith("dds") else 3)
        assert sum(int(r["total_evals"]) for r in records) == trace_total

    def test_sorted_output(self, tmp_path):
        harness.run_matrix(_plan(tmp_path))
        keys = [(r["problem"], r["method"], int(r["replicate"])) for r in _read(tmp_path / "runs.csv")]
        assert keys == sorted(keys)

    def test_incompatible_pairs_skipped(self, tmp_path):
        plan = _plan(tmp_path, methods=["stp:sphere:solution_free:t=1e-4"], replicates=1)
        result = harness.run_matrix(plan)
        assert [s[0] for s in result.skipped] == ["rosenbrock_2"]
        assert {r.problem for r in result.records[0.1]} == {"chain_quadratic_10", "convex_quadratic_10"}

    def test_oracle_failure_recorded(self, tmp_path, monkeypatch):
        from stpopt import problems

        bad = problems.Problem(
            "cliff_1", 1, [0.0], func=lambda x: np.where(np.abs(x[..., 0]) < 0.5, -x[..., 0], np.nan), f_star=-1.0
        )
        monkeypatch.setattr(harness, "suite_load", lambda name: [bad])
        result = harness.run_matrix(_plan(tmp_path, methods=["stp:sphere:fixed:alpha=1"], replicates=1))
        assert [r.status for r in result.runs] == ["oracle_failure"]
        assert not result.records[0.1][0].solved

    def test_seeds(self):
        a = harness.run_seed(0, "p", "m", 0)
        assert a == harness.run_seed(0, "p", "m", 0)
        others = {harness.run_seed(1, "p", "m", 0), harness.run_seed(0, "q", "m", 0),
                  harness.run_seed(0, "p", "n", 0), harness.run_seed(0, "p", "m", 1)}
        assert a not in others and len(others) == 4


class TestReport:
    def test_files_and_summary(self, tmp_path):
        plan = _plan(tmp_path, epsilons=["1e-3"])
        result = harness.run_matrix(plan)
        text = harness.report(result.records, tmp_path)
        rows = list(csv.reader(open(tmp_path / "profile_eps1e-3.csv")))
        assert rows[0] == ["log2_tau", "dds:alpha0=1", "stp:sphere:inv_sqrt:alpha0=1"]
        assert (tmp_path / "profile_eps1e-3.svg").exists()
        assert "efficiency" in text and "robustness" in text

    def test_report_is_pure(self, tmp_path):
        plan = _plan(tmp_path)
        result = harness.run_matrix(plan)
        first = harness.report(result.records, tmp_path / "r1")
        again = harness.report(harness.load_records(tmp_path / "records.csv"), tmp_path / "r2")
        assert first == again
        assert (tmp_path / "r1" / "profile_eps1e-1.csv").read_bytes() == (tmp_path / "r2" / "profile_eps1e-1.csv").read_bytes()

    def test_solver_solving_nothing(self, tmp_path):
        from stpopt.profiles import RunRecord

        recs = {1e-3: [RunRecord("p", "good", 10.0, 1, 1), RunRecord("p", "bad", None, 1, 0)]}
        rows, _, _ = harness.summarize(recs[1e-3])
        by = {r.solver: r for r in rows}
        assert by["bad"].robustness == 0.0 and by["good"].efficiency == 1.0
        assert "unsolved" in harness.report(recs, tmp_path)

    def test_empty(self, tmp_path):
        with pytest.raises(ValueError):
            harness.report({}, tmp_path)


class TestValidate:
    def test_rows(self):
        rows = harness.validate_assumptions(
            n_list=(2, 10), laws=("sphere", "gaussian", "coord_uniform", "coord_weighted", "ortho_basis"),
            n_samples=100_000, seed=1,
        )
        assert all(r.passed for r in rows)
        by = {(r.check, r.law, r.n): r for r in rows}
        assert by[("law", "sphere", 2)].mu_theory == pytest.approx(2 / math.pi)
        assert abs(by[("law", "sphere", 2)].mu - 2 / math.pi) <= 4 * by[("law", "sphere", 2)].mu_se
        assert by[("law", "sphere", 10)].mu_approx == pytest.approx(1 / math.sqrt(20 * math.pi))
        cu = by[("law", "coord_uniform", 10)]
        assert (cu.gamma, cu.gamma_se) == (1.0, 0.0)
        ga = by[("law", "gaussian", 10)]
        assert ga.mu_theory == pytest.approx(0.25231, abs=1e-5)
        assert abs(ga.mu - ga.mu_theory) <= 4 * ga.mu_se
        assert sorted(r.tau for r in rows if r.check == "pstp") == [4, 16]

    def test_table_text(self):
        rows = harness.validate_assumptions(n_list=(3,), laws=("sphere",), n_samples=1000)
        text = harness.validation_table(rows)
        assert len(text.splitlines()) == 1 + len(rows)

    def test_rejects_oracle_law(self):
        with pytest.raises(ConfigurationError):
            harness.validate_assumptions(laws=("oracle_ngd",), n_samples=10)

    def test_rejects_tiny_sample(self):
        with pytest.raises(ValueError):
            harness.validate_assumptions(n_samples=1)


class TestCli:
    def test_list(self, capsys):
        assert cli.main(["list", "--suite", "smoke"]) == 0
        assert capsys.readouterr().out.startswith("name,dim,f_star,L,lambda,convexity_class\n")

    def test_run_and_report(self, tmp_path, capsys):
        args = ["run", "--suite", "smoke", "--method", "dds", "--method", "stp:sphere:inv_sqrt:alpha0=1",
                "--eps", "1e-1", "--seeds", "2", "--max-evals", "2000", "--out", str(tmp_path)]
        assert cli.main(args) == 0
        out = capsys.readouterr().out
        assert cli.main(["report", "--out", str(tmp_path)]) == 0
        assert capsys.readouterr().out == out

    def test_config_error_exit(self, capsys):
        assert cli.main(["run", "--eps", "-1"]) == 2
        assert "eps" in capsys.readouterr().err
        assert cli.main(["run", "--method", "stp:nowhere:fixed"]) == 2

    def test_bad_flag_exit(self):
        with pytest.raises(SystemExit) as info:
            cli.main(["run", "--bogus"])
        assert info.value.code == 2

    def test_io_error_exit(self, tmp_path, capsys):
        assert cli.main(["report", "--out", str(tmp_path / "missing")]) == 3
        assert "missing" in capsys.readouterr().err

    def test_unwritable_out(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        args = ["run", "--suite", "smoke", "--method", "dds", "--eps", "1e-1", "--seeds", "1",
                "--max-evals", "50", "--out", str(blocker / "out")]
        assert cli.main(args) == 3

    def test_validate(self, capsys):
        assert cli.main(["validate", "--dims", "2,3", "--laws", "sphere,coord_uniform", "--samples", "20000"]) == 0
        assert "pass" in capsys.readouterr().out
        assert cli.main(["validate", "--dims", "x"]) == 2


class TestDefaultPlanOrdering:
    def test_convex_smoke_members(self, tmp_path):
        """At eps=1e-3, STP inv_sqrt and RGF need fewer evaluations than DDS on convex smoke problems."""
        methods = ("stp:sphere:inv_sqrt:alpha0=1", "rgf:sphere", "dds:alpha0=1")
        plan = harness.parse_plan(suite="smoke", methods=methods, epsilons=["1e-3"], out_dir=tmp_path)
        result = harness.run_matrix(plan, write=False)
        mean = {(r.problem, r.solver): r.mean_evals_to_target for r in result.records[1e-3]}
        for problem in ("chain_quadratic_10", "convex_quadratic_10"):
            dds = mean[problem, "dds:alpha0=1"]
            for solver in ("stp:sphere:inv_sqrt:alpha0=1", "rgf:sphere"):
                assert mean[problem, solver] < dds
