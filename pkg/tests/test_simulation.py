import csv
import math

import numpy as np
import pytest

from betarob import EstimatorKind, ScenarioConfig
from betarob.simulation import (ExperimentReport, generate_scenario,
                                run_empirical_levels,
                                run_estimator_comparison, run_failure_rate,
                                scenario_hypotheses, scenario_model,
                                scenario_truth)


def config_for(scenario, n=40, contaminated=False, replications=5):
    return ScenarioConfig(scenario, n=n, contaminated=contaminated,
                          replications=replications)


class TestConfigAndTruth:
    def test_true_parameters(self):
        assert scenario_truth("A").theta.tolist() == [-1.0, -2.0, 5.0]
        assert scenario_truth("B").theta.tolist() == [-1.0, -5.5, 5.0]
        assert scenario_truth("C").theta.tolist() == [-3.0, 7.5, 1.0, 2.0]

    def test_validation(self):
        with pytest.raises(ValueError, match="one of A, B, C"):
            ScenarioConfig("D")
        with pytest.raises(ValueError, match="n must be"):
            ScenarioConfig("A", n=50)
        with pytest.raises(ValueError, match="fixed at 0.05"):
            ScenarioConfig("A", contamination_rate=0.10)
        with pytest.raises(ValueError, match="replication"):
            ScenarioConfig("A", replications=0)

    def test_replication_index_bounds(self):
        config = config_for("A", replications=3)
        with pytest.raises(ValueError, match="out of range"):
            generate_scenario(config, 3)
        with pytest.raises(ValueError, match="out of range"):
            generate_scenario(config, -1)


class TestDesign:
    def test_covariates_frozen_across_replications(self):
        config = config_for("A")
        first = generate_scenario(config, 0)
        second = generate_scenario(config, 1)
        np.testing.assert_array_equal(first.model.x, second.model.x)
        assert not np.array_equal(first.y, second.y)

    def test_covariate_block_replication(self):
        for n in (80, 160, 320):
            x40 = scenario_model(config_for("C", n=40)).x
            xn = scenario_model(config_for("C", n=n)).x
            for start in range(0, n, 40):
                np.testing.assert_array_equal(xn[start:start + 40], x40)

    def test_scenario_c_shares_covariate_between_submodels(self):
        model = scenario_model(config_for("C"))
        np.testing.assert_array_equal(model.x, model.z)
        assert scenario_model(config_for("A")).z.shape[1] == 1

    def test_scenario_a_predictor_ranges(self):
        model = scenario_model(config_for("A", n=320))
        mu, phi = model.predictors(scenario_truth("A"))
        assert mu.min() > 0.05 and mu.max() < 0.27
        np.testing.assert_allclose(phi, math.exp(5.0))

    def test_scenario_c_predictor_ranges(self):
        # with x in (0, 1) the design maps mu into (expit(-3), expit(4.5))
        # and phi into (e, e^3); the draws should fill most of both
        model = scenario_model(config_for("C", n=320))
        mu, phi = model.predictors(scenario_truth("C"))
        assert mu.min() > 1.0 / (1.0 + math.exp(3.0))
        assert mu.max() < 1.0 / (1.0 + math.exp(-4.5))
        assert mu.min() < 0.07 and mu.max() > 0.9
        assert phi.min() > math.e and phi.max() < math.exp(3.0)


class TestGeneration:
    def test_deterministic(self):
        config = config_for("B", contaminated=True)
        first = generate_scenario(config, 2)
        second = generate_scenario(config, 2)
        np.testing.assert_array_equal(first.y, second.y)
        np.testing.assert_array_equal(first.contaminated_index,
                                      second.contaminated_index)

    def test_responses_inside_unit_interval(self):
        for scenario in ("A", "B", "C"):
            for contaminated in (False, True):
                config = config_for(scenario, contaminated=contaminated)
                data = generate_scenario(config, 0)
                assert np.all((data.y > 0.0) & (data.y < 1.0))

    def test_contamination_count(self):
        for n, expected in ((40, 2), (80, 4), (160, 8), (320, 16)):
            config = config_for("A", n=n, contaminated=True)
            data = generate_scenario(config, 0)
            assert data.contaminated_index.size == expected
            assert math.ceil(0.05 * n) == expected

    def test_clean_dataset_has_no_contaminated_index(self):
        data = generate_scenario(config_for("A"), 0)
        assert data.contaminated_index.size == 0

    def test_contamination_targets_extreme_means(self):
        for scenario, side in (("A", "smallest"), ("B", "largest"),
                               ("C", "largest")):
            config = config_for(scenario, contaminated=True)
            data = generate_scenario(config, 0)
            mu, _ = data.model.predictors(data.theta_true)
            order = np.argsort(mu, kind="stable")
            k = data.contaminated_index.size
            expected = order[:k] if side == "smallest" else order[-k:]
            assert set(data.contaminated_index) == set(expected)

    def test_contamination_touches_only_selected_rows(self):
        clean = generate_scenario(config_for("B"), 1)
        dirty = generate_scenario(config_for("B", contaminated=True), 1)
        untouched = np.setdiff1d(np.arange(40), dirty.contaminated_index)
        np.testing.assert_array_equal(clean.y[untouched], dirty.y[untouched])
        assert not np.array_equal(clean.y[dirty.contaminated_index],
                                  dirty.y[dirty.contaminated_index])

    def test_contaminated_values_are_shifted(self):
        a = generate_scenario(config_for("A", contaminated=True), 0)
        assert np.all(a.y[a.contaminated_index] > 0.3)
        b = generate_scenario(config_for("B", contaminated=True), 0)
        assert np.all(b.y[b.contaminated_index] < 0.05)
        c = generate_scenario(config_for("C", contaminated=True), 0)
        assert np.all(c.y[c.contaminated_index] < 0.3)


class TestHypotheses:
    def test_scenario_a_set(self):
        hyps = scenario_hypotheses("A")
        assert set(hyps) == {"H1", "H2", "H3"}
        truth = scenario_truth("A").theta
        for hyp in hyps.values():
            np.testing.assert_allclose(hyp.matrix @ truth, hyp.eta0)
        assert hyps["H1"].matrix.shape == (1, 3)
        assert hyps["H3"].matrix.shape == (3, 3)

    def test_scenario_c_set(self):
        hyps = scenario_hypotheses("C")
        assert set(hyps) == {"H4", "H5", "H6"}
        truth = scenario_truth("C").theta
        for hyp in hyps.values():
            np.testing.assert_allclose(hyp.matrix @ truth, hyp.eta0)
        assert hyps["H4"].matrix.shape == (2, 4)
        assert hyps["H6"].matrix.shape == (1, 4)
        np.testing.assert_array_equal(hyps["H6"].matrix,
                                      [[0.0, 0.0, 0.0, 1.0]])


class TestExperiments:
    def test_failure_rate_clean_scenario_a(self):
        config = config_for("A", replications=4)
        report = run_failure_rate(config, alpha_grid=(0.0, 0.3))
        assert set(report.summary) == {
            "lsmle@alpha=0.0", "lsmle@alpha=0.3",
            "lmdpde@alpha=0.0", "lmdpde@alpha=0.3",
        }
        assert all(rate == 0.0 for rate in report.summary.values())
        assert len(report.rows) == 4 * 2 * 2
        per_cell = {}
        for row in report.rows:
            key = (row["estimator"], row["alpha"])
            per_cell[key] = per_cell.get(key, 0) + 1
        assert all(count == 4 for count in per_cell.values())

    def test_report_manifest_and_csv_roundtrip(self, tmp_path):
        config = config_for("A", replications=2)
        report = run_failure_rate(config, alpha_grid=(0.0,),
                                  kinds=(EstimatorKind.LSMLE,))
        manifest = report.manifest()
        assert manifest["experiment"] == "failure"
        assert manifest["scenario"] == "A"
        assert manifest["replications"] == 2
        assert "version" in manifest
        out = tmp_path / "rows.csv"
        report.to_csv(out)
        with open(out, newline="", encoding="utf-8") as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == len(report.rows)
        assert rows[0]["estimator"] == "lsmle"

    def test_to_csv_without_rows_raises(self, tmp_path):
        report = ExperimentReport("failure", config_for("A"))
        with pytest.raises(ValueError, match="no rows"):
            report.to_csv(tmp_path / "empty.csv")

    def test_estimator_comparison_smoke(self):
        config = config_for("A", replications=2)
        report = run_estimator_comparison(config)
        estimators = {row["estimator"] for row in report.rows}
        assert estimators == {"mle", "lsmle", "lmdpde"}
        assert {"beta1", "beta2", "gamma1"} <= set(report.rows[0])
        for kind in ("lsmle", "lmdpde"):
            assert report.summary[f"{kind}_failures"] == 0
            assert report.summary[f"{kind}_alpha_median"] == 0.0
            assert len(report.summary[f"{kind}_median"]) == 3

    def test_empirical_levels_smoke(self):
        config = config_for("A", replications=2)
        report = run_empirical_levels(config)
        for key, rate in report.summary.items():
            if key.endswith("_failures"):
                continue
            assert 0.0 <= rate <= 1.0
        hypotheses = {row["hypothesis"] for row in report.rows}
        assert hypotheses == {"H1", "H2", "H3"}
