"""Tests for scenario presets, market/panel generation and studies."""

import mpmath
import numpy as np
import pytest

from aggload.covariance import CovKind, CovarianceParams, CovarianceSpec, \
    substation_covariance
from aggload.model import check_identifiability, wls_beta_update
from aggload.simulate import (
    BumpCurve,
    FitPlan,
    ScenarioSpec,
    TrueParameters,
    generate_market,
    generate_panel,
    load_presets,
    run_study,
    true_typical_surface,
)

TRUTH = TrueParameters.preset()


class FixedShareRng:
    """Stub RNG returning a constant majority share."""

    def __init__(self, share):
        self.share = share

    def uniform(self, lo, hi, size=None):
        return np.full(size, self.share)


class TestPresets:
    def test_preset_table_matches_study_design(self):
        presets = load_presets()
        assert presets["version"] == 1
        spec7 = ScenarioSpec.preset(7)
        assert spec7.days == 30
        assert spec7.market_balance == "unbalanced"
        assert spec7.covariance_kind == "homogeneous"
        assert spec7.n_clusters == 3
        assert spec7.replicates == 15
        spec2 = ScenarioSpec.preset(2)
        assert (spec2.days, spec2.market_balance, spec2.n_clusters) == \
            (5, "balanced", 1)

    def test_market_totals(self):
        np.testing.assert_array_equal(
            TRUTH.market_totals,
            [231, 151, 156, 109, 225, 172, 206, 182, 175, 160, 254, 69],
        )

    def test_cluster_truth_tables(self):
        np.testing.assert_array_equal(TRUTH.cluster_assignment,
                                      [0] * 6 + [1] * 4 + [2] * 2)
        np.testing.assert_allclose(TRUTH.cluster_sigma,
                                   [[1.54, 1.53], [1.07, 1.28], [0.43, 5.18]])
        np.testing.assert_allclose(TRUTH.cluster_omega,
                                   [[0.16, 0.03], [0.12, 0.09], [0.02, 0.37]])

    def test_surface_truth_values(self):
        np.testing.assert_allclose(TRUTH.gamma, [13.0, 1.0 / 90.0])
        np.testing.assert_allclose(TRUTH.surface_omega, [0.03, 0.7])
        # variance functionals average to their documented targets
        dense = np.linspace(0, 24, 1441)
        assert np.mean(TRUTH.true_eta(0, dense)) == pytest.approx(0.572, rel=1e-6)
        assert np.mean(TRUTH.true_eta(1, dense)) == pytest.approx(5.03, rel=1e-6)

    def test_unknown_scenario_rejected(self):
        with pytest.raises(ValueError):
            ScenarioSpec.preset(9)


class TestGenerateMarket:
    def test_forced_share_rounding(self):
        market = generate_market(TRUTH.market_totals, "unbalanced",
                                 FixedShareRng(0.70))
        assert tuple(market.counts[0]) == (162, 69)

    def test_counts_sum_to_totals(self):
        rng = np.random.default_rng(3)
        market = generate_market(TRUTH.market_totals, "unbalanced", rng)
        np.testing.assert_array_equal(market.counts.sum(axis=1),
                                      TRUTH.market_totals)

    def test_balanced_has_six_type1_majorities(self):
        rng = np.random.default_rng(4)
        market = generate_market(TRUTH.market_totals, "balanced", rng)
        majority1 = market.counts[:, 0] > market.counts[:, 1]
        assert majority1.sum() == 6
        assert np.all(majority1[:6])

    def test_unbalanced_majority_everywhere(self):
        rng = np.random.default_rng(5)
        market = generate_market(TRUTH.market_totals, "unbalanced", rng)
        assert np.all(market.counts[:, 0] > market.counts[:, 1])

    def test_small_total_rejected(self):
        with pytest.raises(ValueError):
            generate_market([10, 1], "unbalanced", np.random.default_rng(0))

    def test_generated_markets_identifiable_for_scenario(self):
        rng = np.random.default_rng(6)
        for balance in ("balanced", "unbalanced"):
            market = generate_market(TRUTH.market_totals, balance, rng)
            assert check_identifiability(market, n_clusters=3).ok


class TestTrueTypicalSurface:
    baseline = BumpCurve(offset=1.0, bumps=())

    def test_threshold_temperature_gives_three_quarters(self):
        val = true_typical_surface(self.baseline, 12.0, 1.0)
        assert val == pytest.approx(0.75)

    def test_warm_limit_is_half(self):
        val = true_typical_surface(self.baseline, 12.0, 100.0)
        assert val == pytest.approx(0.5)

    def test_zero_degrees_against_erf_oracle(self):
        phi_minus_one = float(0.5 * mpmath.erfc(1 / mpmath.sqrt(2)))
        expected = 1.0 - 0.5 * phi_minus_one
        val = true_typical_surface(self.baseline, 12.0, 0.0)
        assert val == pytest.approx(expected, rel=1e-12)
        assert val == pytest.approx(0.920672, abs=1e-6)

    def test_scales_baseline(self):
        curve = BumpCurve(offset=0.2, bumps=((1.0, 20.0, 2.0),))
        t = np.linspace(0, 24, 49)
        vals = true_typical_surface(curve, t, np.full(49, 1.0))
        np.testing.assert_allclose(vals, 0.75 * curve(t), rtol=1e-12)


class TestGeneratePanel:
    def test_cluster_scenario_structure(self):
        spec = ScenarioSpec.preset(5, seed=1)
        panel, ground = generate_panel(spec)
        assert panel.loads.shape == (5, 12, 48)
        np.testing.assert_array_equal(ground.assignment, [0] * 6 + [1] * 4 + [2] * 2)
        assert panel.temperature is None

    def test_surface_scenario_structure(self):
        spec = ScenarioSpec.preset(1, seed=1)
        panel, ground = generate_panel(spec)
        assert panel.temperature is not None
        assert set(panel.scalar_covariates) == {"site_flag"}
        assert set(panel.functional_covariates) == {"humidity"}
        np.testing.assert_array_equal(panel.scalar_covariates["site_flag"],
                                      [1, 1] + [0] * 10)
        # substations share their location's temperature curves
        np.testing.assert_array_equal(panel.temperature[:, 0, :],
                                      panel.temperature[:, 3, :])

    def test_zero_noise_panel_equals_mean_and_recovers_curves(self):
        spec = ScenarioSpec.preset(5, seed=2, days=3, noise_scale=0.0,
                                   grid_minutes=60)
        panel, ground = generate_panel(spec)
        np.testing.assert_array_equal(panel.loads, ground.mean)
        # the linear stage recovers each cluster's curves up to spline
        # approximation error (the bump-shaped truth is not in the span;
        # exact 1e-6 recovery of in-span curves is covered in test_model)
        from aggload.basis import basis_matrix
        from aggload.model import ModelConfig
        from aggload.panel import LoadPanel, MarketTable

        members = list(range(6))
        market = MarketTable(
            tuple(ground.market.substations[j] for j in members),
            ground.market.types,
            ground.market.counts[members],
        )
        sub_panel = LoadPanel(market.substations, panel.days, panel.times,
                              panel.loads[:, members, :])
        cfg = ModelConfig.for_panel(sub_panel, n_time_basis=12,
                                    covariance=CovKind.HOMOGENEOUS)
        params = CovarianceParams(sigma=[1.0, 1.0], omega=[0.2, 0.2])
        beta = wls_beta_update(params, sub_panel, market, cfg)
        phi = basis_matrix(cfg.time_basis, panel.times)
        for c in range(2):
            fitted_curve = phi @ beta[c * 12:(c + 1) * 12]
            true_curve = ground.typical_curve(0, c, panel.times)
            np.testing.assert_allclose(fitted_curve, true_curve, atol=0.03)

    def test_determinism(self):
        spec = ScenarioSpec.preset(5, seed=11, days=2)
        a_panel, a_truth = generate_panel(spec, TRUTH, np.random.default_rng(11))
        b_panel, b_truth = generate_panel(spec, TRUTH, np.random.default_rng(11))
        assert np.array_equal(a_panel.loads, b_panel.loads)
        np.testing.assert_array_equal(a_truth.market.counts,
                                      b_truth.market.counts)

    def test_empirical_covariance_approaches_truth(self):
        # 500 iid days share one substation covariance; the slowly decaying
        # surface-study correlation keeps the Wishart noise low enough for a
        # 10% Frobenius bound at this sample size
        spec = ScenarioSpec.preset(3, seed=13, days=500, grid_minutes=60)
        panel, ground = generate_panel(spec)
        j = 4
        resid = panel.loads[:, j, :] - ground.mean[:, j, :]
        empirical = np.cov(resid.T, bias=True)
        true_cov = substation_covariance(
            ground.market.counts[j], ground.params.surface_cov_spec(),
            ground.params.surface_cov_params(), panel.times, panel.horizon,
        ).values
        rel = np.linalg.norm(empirical - true_cov) / np.linalg.norm(true_cov)
        assert rel < 0.10

    def test_noise_scaling_drives_fmsre_to_zero(self):
        from aggload.diagnostics import relative_residuals
        from aggload.model import ModelConfig, fit, typical_curve

        fmsres = []
        for scale in (1.0, 0.1, 0.01):
            spec = ScenarioSpec.preset(3, seed=17, days=3, grid_minutes=90,
                                       noise_scale=scale)
            panel, ground = generate_panel(spec)
            cfg = ModelConfig.for_panel(
                panel, n_time_basis=6, covariance=CovKind.HOMOGENEOUS,
                n_covariate_basis=4,
                covariates=("site_flag", "humidity"),
            )
            result = fit(panel, ground.market, cfg)
            temp = ground.weather.temperature_grid[0, 0]
            total = 0.0
            for c in (0, 1):
                est = typical_curve(result, c, panel.times, v=temp).values
                true_vals = ground.typical_surface(c, panel.times, temp)
                res = relative_residuals(est, true_vals)
                total += (panel.horizon / panel.times.size) * \
                    float(np.nansum(res.curves**2))
            fmsres.append(total)
        assert fmsres[0] > fmsres[1] > fmsres[2]


class TestRunStudy:
    def small_spec(self, seed=23):
        return ScenarioSpec.preset(1, seed=seed, days=2, replicates=2,
                                   grid_minutes=120)

    def plans(self):
        return [
            FitPlan(name="homogeneous", covariance="homogeneous",
                    n_time_basis=6, n_covariate_basis=4),
            FitPlan(name="complete", covariance="complete", n_time_basis=6,
                    n_covariate_basis=4, n_variance_basis=6,
                    init_from="homogeneous"),
        ]

    def test_report_is_deterministic(self):
        spec = self.small_spec()
        a = run_study(spec, self.plans(),
                      nested_pairs=[("homogeneous", "complete")])
        b = run_study(spec, self.plans(),
                      nested_pairs=[("homogeneous", "complete")])
        assert a.to_json() == b.to_json()

    def test_threading_does_not_change_results(self):
        spec = self.small_spec(seed=29)
        a = run_study(spec, self.plans()[:1])
        b = run_study(spec, self.plans()[:1], threads=2)
        assert a.to_json() == b.to_json()

    def test_report_records_lrt_and_scores(self):
        spec = self.small_spec(seed=31)
        report = run_study(spec, self.plans(),
                           nested_pairs=[("homogeneous", "complete")])
        assert report.plans == ["homogeneous", "complete"]
        rep0 = report.replicates[0]
        assert "homogeneous_vs_complete" in rep0.get("lrt", {})
        entry = rep0["fits"]["homogeneous"]
        assert {"loglik", "bic", "sigma", "omega", "gamma",
                "curve_fmsre_type1", "curve_fmsre_type2"} <= set(entry)
        agg = report.aggregate["homogeneous"]
        assert agg["n_replicates"] == 2
