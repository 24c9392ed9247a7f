"""Counterfactual DGPs, replication engine, and power-grid plumbing."""

import math

import numpy as np
import pytest

from trialpower.core import (
    DIFFERENCE_IN_MEANS,
    DesignInputs,
    efficient_variance,
    power,
    required_sample_size,
)
from trialpower.exceptions import DataError, ValidationError
from trialpower.simulation import (
    CounterfactualSample,
    EstimatorConfig,
    GridConfig,
    PowerCurvePoint,
    ScenarioSpec,
    analytic_params,
    empirical_rate,
    experiment_grid,
    null_calibrated,
    run_replication,
    sample_counterfactual,
    scenario_names,
    table1_scenario,
    true_params,
)

VAR_S = 10.0 / 3.0          # Var of a sum of 10 iid U(-1,1)
VAR_S2 = 188.0 / 9.0        # Var of that sum squared

# (scenario, coefficients, sigma0_sq, sigma1_sq, gamma, tau, bound, n_oracle)
SCENARIO_TABLE = [
    ("linear-constant", (0, 1, 0, 0, 1, 0.5),
     13.0 / 3.0, 13.0 / 3.0, 1.0, 0.5, 4.0, 126),
    ("linear-heterogeneous", (0, 1, 0, 0, 0, 0.5),
     13.0 / 3.0, 1.0, 0.0, 0.5, 22.0 / 3.0, 231),
    ("nonlinear-constant", (1, 1, 0, 1, 1, 1),
     227.0 / 9.0, 227.0 / 9.0, 1.0, 1.0, 4.0, 32),
    ("nonlinear-heterogeneous", (1, 1, 0, 1, 0, 1),
     227.0 / 9.0, 197.0 / 9.0, math.sqrt(188.0 / 218.0), 1.0, 22.0 / 3.0, 58),
]


class TestScenarioTable:
    def test_coefficient_rows(self):
        for name, coeffs, *_ in SCENARIO_TABLE:
            spec = table1_scenario(name)
            assert (spec.a0, spec.b0, spec.c0, spec.a1, spec.b1, spec.c1) == coeffs
            assert spec.d == 10
            assert spec.noise_sd == 1.0
            assert spec.name == name

    def test_effect_offsets(self):
        for name in scenario_names():
            spec = table1_scenario(name)
            assert spec.c1 - spec.c0 in (0.5, 1.0)

    def test_name_canonicalization(self):
        assert table1_scenario("LinearConstant").name == "linear-constant"
        assert table1_scenario("nonlinear_heterogeneous").name == "nonlinear-heterogeneous"
        assert table1_scenario(" Linear Constant ").name == "linear-constant"
        with pytest.raises(ValidationError):
            table1_scenario("quadratic")

    def test_scenario_names_order(self):
        assert scenario_names() == [
            "linear-constant", "linear-heterogeneous",
            "nonlinear-constant", "nonlinear-heterogeneous"]


class TestScenarioSpec:
    def test_mean_functions(self):
        spec = ScenarioSpec(a0=2.0, b0=1.0, c0=0.5, a1=0.0, b1=0.0, c1=3.0, d=2)
        X = np.array([[1.0, 1.0], [0.5, -0.5]])
        assert spec.mu0(X) == pytest.approx([2 * 4 + 2 + 0.5, 0.5])
        assert spec.mu1(X) == pytest.approx([3.0, 3.0])

    def test_dict_round_trip(self):
        spec = table1_scenario("nonlinear-constant")
        assert ScenarioSpec.from_dict(spec.to_dict()) == spec

    def test_from_dict_errors(self):
        with pytest.raises(ValidationError, match="unknown"):
            ScenarioSpec.from_dict({"a0": 0, "b0": 1, "c0": 0, "a1": 0, "b1": 1,
                                    "c1": 1, "slope": 2})
        with pytest.raises(ValidationError, match="missing"):
            ScenarioSpec.from_dict({"a0": 0})

    def test_invariants(self):
        with pytest.raises(ValidationError):
            ScenarioSpec(a0=0, b0=1, c0=0, a1=0, b1=1, c1=1, d=0)
        with pytest.raises(ValidationError):
            ScenarioSpec(a0=0, b0=1, c0=0, a1=0, b1=1, c1=1, noise_sd=0.0)


class TestSampleCounterfactual:
    def test_support_and_shapes(self):
        spec = table1_scenario("linear-constant")
        draw = sample_counterfactual(spec, 500, random_state=60)
        assert draw.X.shape == (500, 10)
        assert draw.n == 500
        assert np.all(draw.X >= -1.0) and np.all(draw.X <= 1.0)
        assert np.all(np.isfinite(draw.y0)) and np.all(np.isfinite(draw.y1))

    def test_deterministic(self):
        spec = table1_scenario("linear-constant")
        a = sample_counterfactual(spec, 100, random_state=61)
        b = sample_counterfactual(spec, 100, random_state=61)
        assert np.array_equal(a.X, b.X)
        assert np.array_equal(a.y0, b.y0)
        assert np.array_equal(a.y1, b.y1)

    def test_constant_mean_spec(self):
        spec = ScenarioSpec(a0=0.0, b0=0.0, c0=2.0, a1=0.0, b1=0.0, c1=-1.0)
        draw = sample_counterfactual(spec, 100_000, random_state=62)
        bound = 3.0 / math.sqrt(100_000)
        assert abs(draw.y0.mean() - 2.0) < bound
        assert abs(draw.y1.mean() - (-1.0)) < bound

    def test_million_row_moments(self):
        spec = table1_scenario("linear-constant")
        draw = sample_counterfactual(spec, 1_000_000, random_state=63)
        assert draw.y1.mean() - draw.y0.mean() == pytest.approx(0.5, abs=0.005)
        S = draw.X.sum(axis=1)
        assert S.var(ddof=1) == pytest.approx(VAR_S, abs=0.02)


class TestPopulationMoments:
    def test_analytic_params_match_frozen_table(self):
        for name, _, s0_sq, s1_sq, gamma, tau, bound, n_oracle in SCENARIO_TABLE:
            params, got_tau = analytic_params(table1_scenario(name))
            assert params.sigma0 ** 2 == pytest.approx(s0_sq, rel=1e-12)
            assert params.sigma1 ** 2 == pytest.approx(s1_sq, rel=1e-12)
            assert params.kappa0 == 1.0 and params.kappa1 == 1.0
            assert params.gamma == pytest.approx(gamma, abs=1e-12)
            assert got_tau == pytest.approx(tau, abs=1e-12)
            assert efficient_variance(DIFFERENCE_IN_MEANS, params) == pytest.approx(
                bound, rel=1e-12)

    def test_oracle_enrollment_targets(self):
        for name, *_, tau, bound, n_oracle in SCENARIO_TABLE:
            params, _ = analytic_params(table1_scenario(name))
            inputs = DesignInputs(effect=DIFFERENCE_IN_MEANS, params=params)
            nu = math.sqrt(bound)
            assert required_sample_size(inputs, nu=nu) == n_oracle
            assert power(n_oracle, tau, 0.0, nu, 0.05) > 0.8
            assert power(n_oracle - 1, tau, 0.0, nu, 0.05) <= 0.8

    def test_monte_carlo_agrees_with_analytic(self):
        for name, *_ in SCENARIO_TABLE:
            spec = table1_scenario(name)
            exact, tau_exact = analytic_params(spec)
            mc, tau_mc = true_params(spec, mc_reps=200_000, random_state=64)
            assert mc.sigma0 ** 2 == pytest.approx(exact.sigma0 ** 2, rel=0.02)
            assert mc.sigma1 ** 2 == pytest.approx(exact.sigma1 ** 2, rel=0.02)
            assert mc.gamma == pytest.approx(exact.gamma, abs=0.02)
            assert tau_mc == pytest.approx(tau_exact, abs=0.02)

    def test_true_params_requires_enough_draws(self):
        with pytest.raises(ValidationError):
            true_params(table1_scenario("linear-constant"), mc_reps=1000)

    def test_gamma_nonnegative_when_control_variation_dominates(self):
        # Var(mu0) >= Var(mu1 - mu0) forces Corr(mu0, mu1) >= 0
        rng = np.random.default_rng(65)
        checked = 0
        while checked < 50:
            a0, a1 = rng.uniform(-2, 2, size=2)
            b0, b1 = rng.uniform(-2, 2, size=2)
            v0 = a0 * a0 * VAR_S2 + b0 * b0 * VAR_S
            vdiff = (a1 - a0) ** 2 * VAR_S2 + (b1 - b0) ** 2 * VAR_S
            if v0 < vdiff or v0 == 0.0:
                continue
            spec = ScenarioSpec(a0=a0, b0=b0, c0=0.0, a1=a1, b1=b1, c1=1.0)
            params, _ = analytic_params(spec)
            assert params.gamma >= -1e-12
            checked += 1


class TestNullCalibration:
    def test_closed_form_shifts(self):
        assert null_calibrated(table1_scenario("linear-constant")).c0 == pytest.approx(0.5)
        assert null_calibrated(table1_scenario("nonlinear-heterogeneous")).c0 == pytest.approx(1.0)
        # nonlinear-constant: c0' = c1 + (a1-a0) E S^2 = 1 + 0 = 1
        assert null_calibrated(table1_scenario("nonlinear-constant")).c0 == pytest.approx(1.0)

    def test_zeroes_the_effect(self):
        for name in scenario_names():
            nulled = null_calibrated(table1_scenario(name))
            _, tau = analytic_params(nulled)
            assert tau == pytest.approx(0.0, abs=1e-12)

    def test_idempotent(self):
        spec = table1_scenario("nonlinear-heterogeneous")
        once = null_calibrated(spec)
        assert null_calibrated(once) == once

    def test_mc_check_passes_for_correct_calibration(self):
        nulled = null_calibrated(table1_scenario("linear-constant"),
                                 mc_reps=200_000, random_state=66)
        assert nulled.c0 == pytest.approx(0.5)


class TestRunReplication:
    def test_near_deterministic_scenario(self):
        spec = ScenarioSpec(a0=0.0, b0=0.0, c0=0.0, a1=0.0, b1=0.0, c1=1.0,
                            noise_sd=0.01)
        result, significant = run_replication(
            spec, 100, 0.5, EstimatorConfig(kind="unadjusted"), 0.05, seed=67)
        assert result.tau_hat == pytest.approx(1.0, abs=0.02)
        assert significant

    def test_seed_determinism(self):
        spec = table1_scenario("linear-constant")
        config = EstimatorConfig(kind="aipw", learner="ols", n_folds=2)
        a, _ = run_replication(spec, 60, 0.5, config, 0.05, seed=68)
        b, _ = run_replication(spec, 60, 0.5, config, 0.05, seed=68)
        assert a.tau_hat == b.tau_hat
        assert a.se == b.se
        assert np.array_equal(a.influence, b.influence)

    def test_every_estimator_kind_runs(self):
        spec = table1_scenario("linear-constant")
        for kind in ("unadjusted", "ancova", "aipw", "oracle"):
            config = (EstimatorConfig(kind="aipw", learner="ols", n_folds=2)
                      if kind == "aipw" else EstimatorConfig(kind=kind))
            result, significant = run_replication(spec, 50, 0.5, config, 0.05, seed=69)
            assert np.isfinite(result.tau_hat)
            assert result.assignment_retries == 0
            assert significant == result.significant

    def test_oracle_unbiased(self):
        spec = table1_scenario("linear-constant")
        config = EstimatorConfig(kind="oracle")
        taus = [run_replication(spec, 200, 0.5, config, 0.05, seed=1000 + i)[0].tau_hat
                for i in range(1000)]
        assert np.mean(taus) == pytest.approx(0.5, abs=0.01)

    def test_hopeless_assignment_errors_out(self):
        spec = table1_scenario("linear-constant")
        with pytest.raises(DataError, match="100 times"):
            run_replication(spec, 4, 1e-12, EstimatorConfig(kind="unadjusted"),
                            0.05, seed=70)

    def test_minimum_size(self):
        spec = table1_scenario("linear-constant")
        with pytest.raises(ValidationError):
            run_replication(spec, 3, 0.5, EstimatorConfig(kind="unadjusted"),
                            0.05, seed=71)


class TestEmpiricalRate:
    def test_matches_manual_seed_loop(self):
        spec = table1_scenario("linear-constant")
        config = EstimatorConfig(kind="unadjusted")
        point = empirical_rate(spec, 60, config, replications=25, base_seed=500)
        manual = sum(run_replication(spec, 60, 0.5, config, 0.05, seed=500 + i)[1]
                     for i in range(25))
        assert point.significant_count == manual
        assert point.replications == 25
        assert point.estimator == "unadjusted"

    def test_single_replication_rate(self):
        spec = table1_scenario("linear-constant")
        point = empirical_rate(spec, 30, EstimatorConfig(kind="unadjusted"),
                               replications=1, base_seed=0)
        assert point.empirical_rate in (0.0, 1.0)
        assert point.mc_half_width == 0.0

    def test_parallel_equals_serial(self):
        spec = table1_scenario("linear-constant")
        config = EstimatorConfig(kind="unadjusted")
        serial = empirical_rate(spec, 50, config, replications=24, base_seed=7)
        parallel = empirical_rate(spec, 50, config, replications=24, base_seed=7,
                                  n_jobs=2)
        assert serial.significant_count == parallel.significant_count

    def test_errors_carry_replicate_context(self):
        spec = table1_scenario("linear-constant")
        with pytest.raises(DataError, match=r"replicate 0 \(seed 123\)"):
            empirical_rate(spec, 4, EstimatorConfig(kind="unadjusted"),
                           replications=2, base_seed=123, pi1=1e-12)

    def test_half_width_formula(self):
        point = PowerCurvePoint(estimator="x", n=10, replications=100,
                                significant_count=30)
        assert point.empirical_rate == pytest.approx(0.3)
        assert point.mc_half_width == pytest.approx(
            1.96 * math.sqrt(0.3 * 0.7 / 100), abs=1e-15)

    def test_oracle_variance_tracks_bound(self):
        # n * Var(tau_hat) should sit near the bound (4.0) at every n; the
        # oracle has no fitting bias, so this is closeness rather than trend
        spec = table1_scenario("linear-constant")
        config = EstimatorConfig(kind="oracle")
        for n in (200, 800, 3200):
            taus = np.array([
                run_replication(spec, n, 0.5, config, 0.05, seed=3000 + i)[0].tau_hat
                for i in range(300)])
            assert n * taus.var(ddof=1) == pytest.approx(4.0, rel=0.25)


class TestEstimatorConfig:
    def test_from_string(self):
        assert EstimatorConfig.from_string("unadj").kind == "unadjusted"
        assert EstimatorConfig.from_string("unadjusted").kind == "unadjusted"
        assert EstimatorConfig.from_string("ancova").label == "ancova"
        assert EstimatorConfig.from_string("oracle").kind == "oracle"
        aipw = EstimatorConfig.from_string("aipw", n_folds=4)
        assert (aipw.kind, aipw.learner, aipw.n_folds) == ("aipw", "ensemble", 4)
        assert aipw.label == "aipw-ensemble"
        knn = EstimatorConfig.from_string("aipw-knn:3")
        assert knn.learner == "knn:3"
        assert EstimatorConfig.from_string("aipw:gbm").learner == "gbm"

    def test_bad_specs(self):
        with pytest.raises(ValidationError):
            EstimatorConfig.from_string("tmle")
        with pytest.raises(ValidationError):
            EstimatorConfig.from_string("aipw-forest")
        with pytest.raises(ValidationError):
            EstimatorConfig(kind="aipw", n_folds=1)

    def test_custom_label_kept(self):
        config = EstimatorConfig(kind="aipw", learner="ols", label="primary")
        assert config.label == "primary"


class TestExperimentGrid:
    def small_config(self, **overrides):
        base = dict(
            scenarios=["linear-constant"],
            estimators=[EstimatorConfig(kind="unadjusted")],
            n_grid=[40, 60],
            replications=20,
            base_seed=900,
            historical_n=600,
            design_learner="ols",
        )
        base.update(overrides)
        return GridConfig(**base)

    def test_rows_and_summary_schema(self):
        rows, summary = experiment_grid(self.small_config())
        assert len(rows) == 2
        assert list(rows[0]) == ["scenario", "estimator", "learner", "n",
                                 "reps", "rate", "mc_half_width"]
        assert rows[0]["scenario"] == "linear-constant"
        assert rows[0]["estimator"] == "unadjusted"
        assert rows[0]["learner"] == ""
        assert [r["n"] for r in rows] == [40, 60]
        assert summary["schema_version"] == 1
        assert summary["tool"]["name"] == "trialpower"
        assert summary["n_rows"] == 2
        targets = summary["targets"]["linear-constant"]
        assert set(targets) >= {"tau", "n_unadj", "n_aipw", "n_oracle",
                                "nu_sq_oracle", "params_hat", "params_true"}
        assert targets["n_oracle"] == 126
        assert targets["tau"] == pytest.approx(0.5)

    def test_deterministic(self):
        a_rows, a_summary = experiment_grid(self.small_config())
        b_rows, b_summary = experiment_grid(self.small_config())
        assert a_rows == b_rows
        assert a_summary["targets"] == b_summary["targets"]

    def test_aipw_rows_record_learner(self):
        rows, _ = experiment_grid(self.small_config(
            estimators=[EstimatorConfig(kind="aipw", learner="ols", n_folds=2)],
            n_grid=[40]))
        assert rows[0]["estimator"] == "aipw-ols"
        assert rows[0]["learner"] == "ols"

    def test_empty_grid_gives_empty_table(self):
        rows, summary = experiment_grid(self.small_config(n_grid=[]))
        assert rows == []
        assert summary["n_rows"] == 0
        assert "linear-constant" in summary["targets"]

    def test_null_mode_requires_explicit_grid(self):
        with pytest.raises(ValidationError, match="explicit n_grid"):
            experiment_grid(self.small_config(n_grid=None, null_calibrate=True))

    def test_null_mode_skips_targets(self):
        rows, summary = experiment_grid(self.small_config(
            n_grid=[40], null_calibrate=True))
        assert summary["targets"] == {}
        assert len(rows) == 1

    def test_auto_grid_spans_unadjusted_target(self):
        rows, summary = experiment_grid(self.small_config(
            n_grid=None, n_grid_points=5, replications=2))
        grid = sorted({r["n"] for r in rows})
        n_unadj = summary["targets"]["linear-constant"]["n_unadj"]
        assert len(grid) == 5
        assert grid[0] == pytest.approx(0.4 * n_unadj, rel=0.02)
        assert grid[-1] == pytest.approx(1.4 * n_unadj, rel=0.02)

    def test_counterfactual_sample_n(self):
        draw = CounterfactualSample(X=np.zeros((7, 2)), y0=np.zeros(7), y1=np.zeros(7))
        assert draw.n == 7
