"""Distribution summaries, protocol determinism, and export round-trips."""

import numpy as np
import pytest

from sautemdp.harness import (
    EvalReport,
    ExperimentPlan,
    ExperimentReport,
    MetricSummary,
    ablation_sweep,
    evaluate,
    evaluate_with_factories,
    export_results,
    load_report,
    report_csv,
    summarize,
    trajectory_seed,
)
from sautemdp.saute import ObjectiveMode, SauteConfig, SauteEnv

from conftest import NoisyEnv, SequenceEnv, ZeroPolicy


class TestSummarize:
    def test_hand_computed_five_points(self):
        s = summarize([1.0, 2.0, 3.0, 4.0, 10.0])
        assert s.q1 == 2.0
        assert s.median == 3.0
        assert s.q3 == 4.0
        assert s.mean == 4.0
        assert s.count == 5

    def test_linear_interpolation_between_ranks(self):
        s = summarize([0.0, 1.0, 2.0, 3.0])
        assert s.q1 == pytest.approx(0.75)
        assert s.median == pytest.approx(1.5)
        assert s.q3 == pytest.approx(2.25)

    def test_degenerate_distribution(self):
        s = summarize([7.0] * 12)
        assert s.q1 == s.median == s.q3 == 7.0
        assert s.outliers == ()
        assert s.whisker_low == s.whisker_high == 7.0

    def test_zero_iqr_flags_far_point(self):
        s = summarize([0.0, 0.0, 0.0, 0.0, 100.0])
        assert s.outliers == (100.0,)
        assert s.whisker_high == 0.0

    def test_whiskers_truncated_to_data_range(self):
        s = summarize([0.0, 1.0, 2.0, 3.0, 4.0])
        assert s.whisker_low == 0.0
        assert s.whisker_high == 4.0

    def test_quartile_order_invariant(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            s = summarize(rng.normal(size=31))
            assert s.q1 <= s.median <= s.q3
            assert s.whisker_low <= s.q1 and s.q3 <= s.whisker_high

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            summarize([])


class TestTrajectorySeeds:
    def test_deterministic_and_distinct(self):
        s1 = trajectory_seed(0, 1, 2)
        s2 = trajectory_seed(0, 1, 2)
        s3 = trajectory_seed(0, 2, 1)
        assert s1 == s2
        assert s1 != s3


def small_plan(**kw):
    defaults = dict(n_seeds=2, n_eval_trajectories=3, master_seed=9)
    defaults.update(kw)
    return ExperimentPlan(**defaults)


class TestEvaluate:
    def test_safe_run_zero_violations(self):
        env = SequenceEnv([0.2], [0.0], budget_d=5.0, horizon=6)
        report = evaluate(ZeroPolicy(), env, small_plan())
        assert report.stats.violation_fraction == 0.0
        assert report.stats.cost_rate == 0.0
        assert len(report.rows) == 6

    def test_identical_trajectories_degenerate_stats(self):
        env = SequenceEnv([0.5], [0.1], budget_d=5.0, horizon=6)
        report = evaluate(ZeroPolicy(), env, small_plan())
        s = report.stats.task_return
        assert s.q1 == s.median == s.q3
        assert s.outliers == ()

    def test_violating_run_counts_fraction_and_rate(self):
        env = SequenceEnv([0.0], [1.0], budget_d=2.5, horizon=6)
        report = evaluate(ZeroPolicy(), env, small_plan())
        assert report.stats.violation_fraction == 1.0
        # partial sums 1..6 exceed 2.5 from step 3 onward: 4 of 6 steps
        assert report.stats.cost_rate == pytest.approx(4.0 / 6.0)
        assert report.stats.max_safety_total == 6.0

    def test_error_carries_coordinates(self):
        class FailingEnv(SequenceEnv):
            def step(self, action):
                raise RuntimeError("boom")

        env = FailingEnv([0.0], [0.0])
        with pytest.raises(Exception, match="seed 0, trajectory 0"):
            evaluate(ZeroPolicy(), env, small_plan())

    def test_jobs_do_not_change_output(self):
        def make_pair():
            return ZeroPolicy(), NoisyEnv(budget_d=8.0, horizon=12)

        r1 = evaluate_with_factories(make_pair, small_plan(), jobs=1)
        r4 = evaluate_with_factories(make_pair, small_plan(), jobs=4)
        assert r1 == r4


class TestExport:
    def make_report(self):
        env = NoisyEnv(budget_d=8.0, horizon=12)
        cell = evaluate(ZeroPolicy(), env, small_plan(task_divisor=10.0), label="cellA")
        return ExperimentReport(cells=(cell,))

    def test_csv_has_fixed_header(self, tmp_path):
        report = self.make_report()
        text = report_csv(report)
        header = text.splitlines()[0]
        assert header == (
            "cell,seed_index,trajectory_index,trajectory_seed,task_return,"
            "safety_total,max_step_z_deficit,violated,steps,task_return_norm,"
            "safety_total_norm"
        )

    def test_empty_report_header_only(self):
        text = report_csv(ExperimentReport(cells=()))
        assert text == (
            "cell,seed_index,trajectory_index,trajectory_seed,task_return,"
            "safety_total,max_step_z_deficit,violated,steps,task_return_norm,"
            "safety_total_norm\n"
        )

    def test_normalized_columns_divide_raw(self):
        report = self.make_report()
        lines = report_csv(report).splitlines()[1:]
        for line in lines:
            parts = line.split(",")
            assert float(parts[9]) == pytest.approx(float(parts[4]) / 10.0, rel=1e-15)
            assert float(parts[10]) == pytest.approx(float(parts[5]) / 8.0, rel=1e-15)

    def test_json_round_trip_bit_exact(self, tmp_path):
        report = self.make_report()
        path = tmp_path / "r.json"
        export_results(report, "json", path)
        loaded = load_report(path)
        assert loaded == report

    def test_csv_deterministic_bytes(self, tmp_path):
        r1 = self.make_report()
        r2 = self.make_report()
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        export_results(r1, "csv", p1)
        export_results(r2, "csv", p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            export_results(ExperimentReport(cells=()), "xml", tmp_path / "x")

    def test_io_error_carries_path(self):
        with pytest.raises(OSError, match="no/such/dir"):
            export_results(ExperimentReport(cells=()), "csv", "no/such/dir/out.csv")


class TestAblationSweep:
    def test_matrix_labels_and_shaping_effect(self):
        inner_costs = dict(task_costs=[0.5], safety_costs=[1.0])

        def make_cell(label):
            cfg = SauteConfig(
                budget_d=2.0,
                gamma_l=1.0,
                reshape_n=50.0 if label == "full" else float(label[2:]) if label.startswith("n=") else 50.0,
                normalize=True,
                mode=ObjectiveMode.MINIMIZE_COST,
                cost_shaping=label != "no_CS",
            )
            env = SauteEnv(SequenceEnv(horizon=6, budget_d=2.0, **inner_costs), cfg)
            return ZeroPolicy(), env

        report = ablation_sweep(
            make_cell, small_plan(), no_sa=True, no_cs=True, n_sweep=(0.0, 10.0)
        )
        labels = [c.label for c in report.cells]
        assert labels == ["full", "no_SA", "no_CS", "n=0", "n=10"]
        # every cell sees the same violations (shaping does not change the
        # safety accounting, only the emitted cost)
        for cell in report.cells:
            assert cell.stats.violation_fraction == 1.0

    def test_requires_a_switch(self):
        with pytest.raises(ValueError):
            ablation_sweep(lambda label: (ZeroPolicy(), NoisyEnv()), small_plan(),
                           no_sa=False, no_cs=False, n_sweep=())


class TestBudgetGeneralization:
    def test_baseline_at_own_budget_equals_direct_evaluate(self):
        from sautemdp.harness import budget_generalization

        def make_env(budget):
            return SequenceEnv([0.2], [0.5], budget_d=budget, horizon=8)

        def train_agent(spec):
            return spec  # stateless stand-in artifact

        def bind_agent(artifact, env):
            return ZeroPolicy()

        plan = small_plan()
        matrix = budget_generalization(
            train_agent,
            bind_agent,
            make_env,
            eval_budgets=[3.0, 5.0],
            naive_budget=5.0,
            meta_spec="meta",
            plan=plan,
        )
        labels = [c.label for c in matrix.cells]
        assert labels == [
            "baseline@3", "naive@3", "meta@3",
            "baseline@5", "naive@5", "meta@5",
        ]
        direct = evaluate(ZeroPolicy(), make_env(3.0), plan, label="baseline@3", budget_d=3.0)
        assert matrix.cell("baseline@3") == direct

    def test_rejects_nonpositive_budgets(self):
        from sautemdp.harness import budget_generalization

        with pytest.raises(ValueError):
            budget_generalization(
                lambda s: s, lambda a, e: ZeroPolicy(), lambda b: NoisyEnv(),
                eval_budgets=[0.0], naive_budget=1.0, meta_spec=None, plan=small_plan(),
            )
