"""Tests for CSV ingestion, JSON documents and the command-line interface."""

import json

import numpy as np
import pytest

from aggload import io as aio
from aggload.cli import main
from aggload.covariance import CovKind, CovarianceParams
from aggload.diagnostics import likelihood_ratio_test
from aggload.errors import SchemaError
from aggload.model import fit
from aggload.simulate import ScenarioSpec, TrueParameters, generate_panel

TRUTH = TrueParameters.preset()


def surface_bundle(tmp_path, seed=3, days=2, grid_minutes=60):
    spec = ScenarioSpec.preset(3, seed=seed, days=days,
                               grid_minutes=grid_minutes)
    panel, ground = generate_panel(spec, TRUTH, np.random.default_rng(seed))
    paths = aio.write_panel_csv(
        tmp_path, panel, ground.market,
        temperature_coarse=ground.weather.temperature_coarse,
        coarse_hours=ground.weather.coarse_hours,
        location_names=ground.weather.location_names,
        location_of=ground.location_of,
    )
    return panel, ground, paths


class TestRoundTrip:
    def test_surface_panel_exact_round_trip(self, tmp_path):
        panel, ground, paths = surface_bundle(tmp_path)
        back, market = aio.ingest(
            paths["loads"], paths["market"],
            temperature_path=paths["temperature"],
            locations_path=paths["locations"],
            covariates_path=paths["covariates"],
        )
        assert back.substations == panel.substations
        assert back.days == panel.days
        assert np.array_equal(back.times, panel.times)
        assert np.array_equal(back.loads, panel.loads)
        assert np.array_equal(back.temperature, panel.temperature)
        assert np.array_equal(back.scalar_covariates["site_flag"],
                              panel.scalar_covariates["site_flag"])
        assert np.array_equal(back.functional_covariates["humidity"],
                              panel.functional_covariates["humidity"])
        assert np.array_equal(market.counts, ground.market.counts)
        assert market.types == ground.market.types

    def test_cluster_panel_round_trip(self, tmp_path):
        spec = ScenarioSpec.preset(5, seed=5, days=2, grid_minutes=120)
        panel, ground = generate_panel(spec, TRUTH, np.random.default_rng(5))
        paths = aio.write_panel_csv(tmp_path, panel, ground.market)
        back, market = aio.ingest(paths["loads"], paths["market"])
        assert np.array_equal(back.loads, panel.loads)
        assert back.temperature is None


class TestIngestErrors:
    def write(self, path, text):
        path.write_text(text)
        return path

    def base_files(self, tmp_path):
        loads = self.write(tmp_path / "loads.csv",
                           "substation,day,time,load\n"
                           "S1,1,0,1.0\nS1,1,12,2.0\n"
                           "S2,1,0,3.0\nS2,1,12,4.0\n")
        market = self.write(tmp_path / "market.csv",
                            "substation,type,count\n"
                            "S1,type1,5\nS2,type1,7\n")
        return loads, market

    def test_missing_cell(self, tmp_path):
        _, market = self.base_files(tmp_path)
        loads = self.write(tmp_path / "loads.csv",
                           "substation,day,time,load\n"
                           "S1,1,0,1.0\nS1,1,12,2.0\nS2,1,0,3.0\n")
        with pytest.raises(SchemaError, match="missing cells"):
            aio.ingest(loads, market)

    def test_duplicate_time_rejected(self, tmp_path):
        _, market = self.base_files(tmp_path)
        loads = self.write(tmp_path / "loads.csv",
                           "substation,day,time,load\n"
                           "S1,1,0,1.0\nS1,1,0,2.0\n"
                           "S2,1,0,3.0\nS2,1,0,4.0\n")
        with pytest.raises(SchemaError):
            aio.ingest(loads, market)

    def test_unknown_substation_in_market(self, tmp_path):
        loads, _ = self.base_files(tmp_path)
        market = self.write(tmp_path / "market.csv",
                            "substation,type,count\n"
                            "S1,type1,5\nS2,type1,7\nS9,type1,3\n")
        with pytest.raises(SchemaError, match="unknown substation"):
            aio.ingest(loads, market)

    def test_negative_market_count(self, tmp_path):
        loads, _ = self.base_files(tmp_path)
        market = self.write(tmp_path / "market.csv",
                            "substation,type,count\n"
                            "S1,type1,5\nS2,type1,-7\n")
        with pytest.raises(SchemaError, match="negative market count"):
            aio.ingest(loads, market)

    def test_header_mismatch(self, tmp_path):
        _, market = self.base_files(tmp_path)
        loads = self.write(tmp_path / "loads.csv",
                           "sub,day,time,load\nS1,1,0,1.0\n")
        with pytest.raises(SchemaError, match="header"):
            aio.ingest(loads, market)

    def test_temperature_must_cover_grid(self, tmp_path):
        loads, market = self.base_files(tmp_path)
        temp = self.write(tmp_path / "temperature.csv",
                          "location,day,time,temp\n"
                          "T1,1,0,2.0\nT1,1,3,2.5\nT1,1,6,3.0\nT1,1,9,3.5\n")
        locs = self.write(tmp_path / "locations.csv",
                          "substation,location\nS1,T1\nS2,T1\n")
        with pytest.raises(SchemaError, match="cover"):
            aio.ingest(loads, market, temperature_path=temp,
                       locations_path=locs)


class TestResultDocuments:
    def small_fit(self, seed=9):
        rng = np.random.default_rng(seed)
        import sys
        sys.path.insert(0, str(__import__("pathlib").Path(__file__).parent))
        from synthdata import sample_simple_panel, simple_config, toy_market

        market = toy_market(4, 2, rng, lo=3, hi=30)
        cfg = simple_config(n_basis=4, covariance=CovKind.HOMOGENEOUS)
        beta = np.concatenate([0.5 + rng.random(4), 1.5 + rng.random(4)])
        truth = CovarianceParams(sigma=[0.4, 1.1], omega=[0.2, 0.5])
        panel = sample_simple_panel(rng, market, cfg, beta, truth, n_days=4,
                                    times=np.linspace(0, 21, 8))
        return fit(panel, market, cfg), panel, market

    def test_fit_document_round_trip(self, tmp_path):
        result, panel, market = self.small_fit()
        doc = aio.fit_to_dict(result)
        path = aio.write_json(doc, tmp_path / "fit.json")
        loaded = aio.read_result_json(path)
        assert loaded.kind == "fit"
        assert loaded.loglik == pytest.approx(result.loglik)
        assert loaded.n_parameters == result.n_parameters
        assert (loaded.n_days, loaded.n_substations, loaded.n_times) == \
            (result.n_days, result.n_substations, result.n_times)
        np.testing.assert_allclose(loaded.beta(), result.beta)
        np.testing.assert_allclose(loaded.cov_params().sigma,
                                   result.cov_params.sigma)
        cfg = loaded.model_config()
        assert cfg.time_basis == result.config.time_basis
        assert cfg.covariance.kind == result.config.covariance.kind
        assert np.array_equal(loaded.market().counts, market.counts)

    def test_lrt_works_on_loaded_documents(self, tmp_path):
        result, panel, market = self.small_fit()
        doc = aio.fit_to_dict(result)
        a = aio.read_result_json(aio.write_json(doc, tmp_path / "a.json"))
        bigger = dict(doc)
        bigger["n_parameters"] = doc["n_parameters"] + 3
        bigger["loglik"] = doc["loglik"] + 4.0
        b = aio.read_result_json(aio.write_json(bigger, tmp_path / "b.json"))
        report = likelihood_ratio_test(a, b)
        assert report.statistic == pytest.approx(8.0)
        assert report.df == 3

    def test_schema_version_checked(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"schema_version": 99, "kind": "fit"}))
        with pytest.raises(SchemaError, match="schema version"):
            aio.read_result_json(path)


class TestCli:
    def simulate_args(self, out, scenario=5, days=2, grid=120.0, reps=1,
                      seed=21):
        return [
            "simulate", "--scenario", str(scenario), "--days", str(days),
            "--grid-minutes", str(grid), "--replicates", str(reps),
            "--seed", str(seed), "--output-dir", str(out),
        ]

    def test_simulate_writes_bundles(self, tmp_path):
        assert main(self.simulate_args(tmp_path)) == 0
        rep = tmp_path / "replicate-01"
        assert (rep / "loads.csv").exists()
        assert (rep / "market.csv").exists()
        truth = json.loads((rep / "truth.json").read_text())
        assert truth["kind"] == "cluster"
        assert truth["assignment"] == [1] * 6 + [2] * 4 + [3] * 2

    def test_fit_cluster_diagnose_compare_pipeline(self, tmp_path, capsys):
        sim = tmp_path / "sim"
        assert main(self.simulate_args(sim, scenario=3, days=2, grid=60.0,
                                       seed=33)) == 0
        rep = sim / "replicate-01"
        data = [
            "--loads", str(rep / "loads.csv"),
            "--market", str(rep / "market.csv"),
            "--temperature", str(rep / "temperature.csv"),
            "--locations", str(rep / "locations.csv"),
            "--covariates", str(rep / "covariates.csv"),
        ]
        out_h = tmp_path / "homog"
        code = main(["fit", *data, "--covariance", "homogeneous",
                     "--time-basis", "6", "--temp-basis", "4",
                     "--output-dir", str(out_h)])
        assert code == 0
        fit_doc = json.loads((out_h / "fit.json").read_text())
        assert fit_doc["kind"] == "fit"
        assert len(fit_doc["covariance"]["sigma"]) == 2
        assert len(fit_doc["covariance"]["omega"]) == 2

        out_c = tmp_path / "complete"
        code = main(["fit", *data, "--covariance", "complete",
                     "--time-basis", "6", "--temp-basis", "4",
                     "--variance-basis", "6",
                     "--init-from", str(out_h / "fit.json"),
                     "--output-dir", str(out_c)])
        assert code == 0

        code = main(["diagnose", *data, "--fit", str(out_h / "fit.json"),
                     "--output-dir", str(tmp_path / "diag")])
        assert code == 0
        diag = json.loads((tmp_path / "diag" / "diagnostics.json").read_text())
        assert set(diag["fit_fmsre"]) == set(fit_doc["market"]["substations"])
        assert (tmp_path / "diag" / "residuals.csv").exists()

        capsys.readouterr()
        code = main(["compare", "--nested", str(out_h / "fit.json"),
                     "--larger", str(out_c / "fit.json")])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["lrt"]["df"] == 10
        assert 0.0 <= report["lrt"]["p_value"] <= 1.0

    def test_cluster_command_is_deterministic(self, tmp_path):
        sim = tmp_path / "sim"
        assert main(self.simulate_args(sim, seed=44)) == 0
        rep = sim / "replicate-01"
        args = [
            "cluster", "--loads", str(rep / "loads.csv"),
            "--market", str(rep / "market.csv"),
            "--clusters", "2", "--trials", "4", "--seed", "7",
            "--time-basis", "6",
        ]
        out1, out2 = tmp_path / "c1", tmp_path / "c2"
        assert main(args + ["--output-dir", str(out1)]) == 0
        assert main(args + ["--output-dir", str(out2)]) == 0
        assert (out1 / "mixture.json").read_bytes() == \
            (out2 / "mixture.json").read_bytes()
        doc = json.loads((out1 / "mixture.json").read_text())
        rows = np.asarray(doc["responsibilities"])
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=2e-6)

    def test_identifiability_exit_code(self, tmp_path):
        (tmp_path / "loads.csv").write_text(
            "substation,day,time,load\n"
            "S1,1,0,1.0\nS1,1,12,2.0\nS2,1,0,3.0\nS2,1,12,4.0\n"
        )
        (tmp_path / "market.csv").write_text(
            "substation,type,count\n"
            "S1,type1,5\nS1,type2,2\nS2,type1,7\nS2,type2,1\n"
        )
        code = main(["fit", "--loads", str(tmp_path / "loads.csv"),
                     "--market", str(tmp_path / "market.csv"),
                     "--time-basis", "4", "--output-dir", str(tmp_path)])
        assert code == 2

    def test_schema_error_exit_code(self, tmp_path):
        code = main(["fit", "--loads", str(tmp_path / "absent.csv"),
                     "--market", str(tmp_path / "m.csv"),
                     "--output-dir", str(tmp_path)])
        assert code == 1

    def test_env_config_supplies_defaults(self, tmp_path, monkeypatch):
        cfg = tmp_path / "defaults.json"
        cfg.write_text(json.dumps({"output_dir": str(tmp_path / "from-env")}))
        monkeypatch.setenv("AGGLOAD_CONFIG", str(cfg))
        assert main(self.simulate_args(tmp_path / "ignored", seed=50)[:-2]) == 0
        assert (tmp_path / "from-env" / "replicate-01" / "loads.csv").exists()
