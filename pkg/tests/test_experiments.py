import json

import numpy as np
import pytest

from pencrit import (
    ConfigError,
    ExperimentPlan,
    FamilyKind,
    FamilySpec,
    FitOptions,
    ModelSubset,
    PenaltyKind,
    PenaltySchedule,
    run_consistency,
    run_nonconsistency,
    run_normality,
    single_path_loglog_sweep,
)

FAST = FitOptions(n_starts=2)

AR_SPEC = FamilySpec(FamilyKind.ARX, p=2)
AR_THETA = np.array([0.0, 0.5, 0.0, 1.0])
AR_NESTED = [ModelSubset((1, 4)), ModelSubset((1, 2, 4)),
             ModelSubset((1, 2, 3, 4))]


def _plan(schedules, n_grid=(300, 1200), reps=30, tag="consistency", seed=7):
    return ExperimentPlan(
        spec=AR_SPEC, theta_true=AR_THETA.copy(), candidates=list(AR_NESTED),
        schedules=schedules, n_grid=list(n_grid), replications=reps,
        base_seed=seed, tag=tag, burn_in=100,
    )


class TestPlanValidation:
    def test_n_grid_must_increase(self):
        with pytest.raises(ConfigError):
            _plan([PenaltySchedule(PenaltyKind.LOG)], n_grid=(1200, 300))

    def test_replications_positive(self):
        with pytest.raises(ConfigError):
            _plan([PenaltySchedule(PenaltyKind.LOG)], reps=0)

    def test_consistency_plan_needs_true_support(self):
        with pytest.raises(ConfigError):
            ExperimentPlan(
                spec=AR_SPEC, theta_true=AR_THETA.copy(),
                candidates=[ModelSubset((1, 4))],  # misses the lag-1 coordinate
                schedules=[PenaltySchedule(PenaltyKind.LOG)],
                n_grid=[300], replications=10, base_seed=1,
            )

    def test_true_subset_smallest_containing(self):
        plan = _plan([PenaltySchedule(PenaltyKind.LOG)])
        assert plan.true_subset() == ModelSubset((1, 2, 4))

    def test_fit_budget_cap(self):
        with pytest.raises(ConfigError):
            ExperimentPlan(
                spec=AR_SPEC, theta_true=AR_THETA.copy(),
                candidates=list(AR_NESTED) * 400,
                schedules=[PenaltySchedule(PenaltyKind.LOG)],
                n_grid=[100, 200, 300], replications=500, base_seed=1,
            )

    def test_from_config(self):
        text = """
tag = "consistency"
theta_true = [0.0, 0.5, 0.0, 1.0]
candidates = "nested"
penalties = ["log", "const:1"]
n_grid = [300, 1200]
replications = 25
base_seed = 11

[family]
kind = "ARX"
p = 2
"""
        plan = ExperimentPlan.from_config(text)
        assert plan.spec.kind is FamilyKind.ARX
        assert plan.replications == 25
        assert [s.label() for s in plan.schedules] == ["log", "const:1"]
        assert plan.candidates == AR_NESTED
        np.testing.assert_array_equal(plan.theta_true, AR_THETA)

    def test_from_config_explicit_candidates(self):
        text = """
theta_true = [0.0, 0.5, 0.0, 1.0]
candidates = [[1, 2, 4], [1, 2, 3, 4]]
penalties = ["log"]
n_grid = [500]
replications = 5
base_seed = 3

[family]
kind = "ARX"
p = 2
"""
        plan = ExperimentPlan.from_config(text)
        assert plan.candidates == [ModelSubset((1, 2, 4)),
                                   ModelSubset((1, 2, 3, 4))]

    def test_from_config_requires_family(self):
        with pytest.raises(ConfigError):
            ExperimentPlan.from_config('theta_true = [1.0]\n')


@pytest.fixture(scope="module")
def consistency_report():
    plan = _plan([PenaltySchedule(PenaltyKind.LOG),
                  PenaltySchedule(PenaltyKind.CONSTANT, 1e-9)])
    return plan, run_consistency(plan, FAST)


class TestRunConsistency:
    def test_rates_sum_to_one(self, consistency_report):
        _, report = consistency_report
        for cell in report.cells:
            total = cell.hit_rate + cell.overfit_rate + cell.underfit_rate
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_log_hit_rate_reasonable_at_largest_n(self, consistency_report):
        _, report = consistency_report
        log_cells = {c.n: c for c in report.cells if c.schedule == "log"}
        assert log_cells[1200].hit_rate >= 0.8

    def test_vanishing_penalty_overfits(self, consistency_report):
        # near-zero constant penalty: nested minimization picks the largest
        # model nearly always, so the hit rate collapses
        _, report = consistency_report
        tiny = {c.n: c for c in report.cells if c.schedule.startswith("const")}
        assert tiny[1200].hit_rate <= 0.2
        assert tiny[1200].overfit_rate >= 0.8

    def test_m_star_recorded(self, consistency_report):
        _, report = consistency_report
        assert report.m_star == ModelSubset((1, 2, 4))

    def test_deterministic_bit_for_bit(self, consistency_report):
        plan, report = consistency_report
        again = run_consistency(
            _plan([PenaltySchedule(PenaltyKind.LOG),
                   PenaltySchedule(PenaltyKind.CONSTANT, 1e-9)]), FAST)
        a = json.dumps(report.statistics_payload(), default=str, sort_keys=True)
        b = json.dumps(again.statistics_payload(), default=str, sort_keys=True)
        assert a == b

    def test_requires_consistency_tag(self):
        plan = _plan([PenaltySchedule(PenaltyKind.LOG)], tag="other")
        with pytest.raises(ConfigError):
            run_consistency(plan, FAST)

    def test_csv_outputs(self, consistency_report):
        _, report = consistency_report
        lines = report.cells_csv().strip().splitlines()
        assert lines[0] == ("schedule,n,hit_rate,overfit_rate,underfit_rate,"
                            "mc_stderr,replications,failures")
        assert len(lines) == 1 + len(report.cells)
        plot = report.plot_data_csv().strip().splitlines()
        assert plot[0] == "schedule,n,metric,value"
        assert len(plot) == 1 + 4 * len(report.cells)

    def test_json_roundtrip(self, consistency_report):
        _, report = consistency_report
        payload = json.loads(report.to_json())
        assert payload["m_star"] == [1, 2, 4]
        assert "metadata" in payload and "backend" in payload["metadata"]


class TestRunNonconsistency:
    def test_requires_constant_schedule(self):
        plan = _plan([PenaltySchedule(PenaltyKind.LOG)], tag="nonconsistency")
        with pytest.raises(ConfigError):
            run_nonconsistency(plan, options=FAST)

    def test_prediction_block(self):
        plan = _plan([PenaltySchedule(PenaltyKind.CONSTANT, 1.0),
                      PenaltySchedule(PenaltyKind.LOG)],
                     n_grid=(500, 2000), reps=40, tag="nonconsistency", seed=8)
        report = run_nonconsistency(plan, options=FAST, calibration_n=20_000)
        assert len(report.predictions) == 1
        pred = report.predictions[0]
        assert pred["schedule"] == "const:1"
        assert 0.0 < pred["predicted_overfit"] < 1.0
        assert isinstance(pred["agreement"], bool)
        # LOG control overfits less than the bounded penalty at the largest n
        cells = {(c.schedule, c.n): c for c in report.cells}
        assert (cells[("log", 2000)].overfit_rate
                <= cells[("const:1", 2000)].overfit_rate)


class TestRunNormality:
    def test_normality_block(self):
        plan = ExperimentPlan(
            spec=FamilySpec(FamilyKind.ARX, p=1),
            theta_true=np.array([0.0, 0.5, 1.0]),
            candidates=[ModelSubset((1, 2, 3))],
            schedules=[PenaltySchedule(PenaltyKind.LOG)],
            n_grid=[2000], replications=80, base_seed=9, burn_in=100,
        )
        report = run_normality(plan, options=FAST)
        blk = report.normality
        assert blk["n"] == 2000
        assert blk["replications"] == 80
        assert np.asarray(blk["empirical_cov"]).shape == (3, 3)
        assert np.isfinite(blk["max_scaled_deviation"])
        assert len(blk["normality_pvalues"]) == 3
        assert 0.0 <= blk["fraction_normal_at_1pct"] <= 1.0


class TestSinglePathSweep:
    def test_structure(self):
        plan = _plan([PenaltySchedule(PenaltyKind.LOGLOG, 1.0)],
                     n_grid=(256, 1024), reps=1)
        out = single_path_loglog_sweep(plan, [0.5, 2.0, 8.0], FAST)
        assert out["m_star"] == ModelSubset((1, 2, 4))
        assert out["path_sizes"] == [32, 64, 128, 256, 512, 1024]
        assert set(out["last_disagreement_n"]) == {0.5, 2.0, 8.0}
        for v in out["last_disagreement_n"].values():
            assert v is None or v in out["path_sizes"]
