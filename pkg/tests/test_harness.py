"""
Tests for the Harness module
"""

import json
import math

import pandas as pd
import pytest

from app.monitoring.chain_loader import CONFIGS_DIR
from app.monitoring.errors import ConfigError, HarnessError
from app.monitoring.harness import (
    ExperimentHarness,
    analytic_error_ratio,
    error_ratio_study,
    load_and_execute,
    load_experiment_config,
    ratio_chain,
    ratio_spec,
)
from app.monitoring.pse import size
from app.monitoring.schema import METRICS_COLUMNS, ExperimentConfig
from app.monitoring.settings import Settings


@pytest.fixture
def settings():
    """Small chunks and a short queue so the producer thread wraps around."""
    return Settings(chunk_size=64, queue_size=2)


def _config(**overrides):
    data = {
        "kind": "run",
        "chain": "lending.json",
        "spec": "p(g,gy) - p(gbar,gbary)",
        "steps": 2000,
        "runs": 3,
        "stride": 100,
    }
    data.update(overrides)
    return ExperimentConfig.model_validate(data)


class TestRunExperiment:
    """Test suite for monitored runs."""

    def test_metrics_table(self, settings):
        """Test the shape and ordering of the metrics table."""
        frame = ExperimentHarness(_config(), settings).run_experiment()

        assert list(frame.columns) == METRICS_COLUMNS
        assert len(frame) == 3 * 20
        assert sorted(frame["run"].unique().tolist()) == [0, 1, 2]
        assert frame.groupby("run")["step"].max().tolist() == [2000, 2000, 2000]

    def test_width_never_grows(self, settings):
        """Test that the interval width does not increase along a run."""
        frame = ExperimentHarness(_config(), settings).run_experiment()
        for _, run in frame.groupby("run"):
            widths = run["width"].dropna().tolist()
            assert all(b <= a + 1e-12 for a, b in zip(widths, widths[1:]))

    def test_threaded_matches_unthreaded(self, settings):
        """Test that the producer thread does not change the monitored path."""
        threaded = ExperimentHarness(_config(threaded=True, workers=2), settings).run_experiment()
        plain = ExperimentHarness(_config(threaded=False), settings).run_experiment()
        columns = ["run", "step", "state", "lo", "hi", "mean", "width"]

        pd.testing.assert_frame_equal(threaded[columns], plain[columns])

    def test_final_step_recorded(self, settings):
        """Test that the last step is recorded even off the stride."""
        frame = ExperimentHarness(_config(steps=250, runs=1, stride=100), settings).run_experiment()

        assert frame["step"].tolist() == [100, 200, 250]

    def test_single_step_pending(self, settings):
        """Test that a run too short for a sample records one pending row."""
        config = _config(spec="p(g,gy)*p(g,ybar)", steps=1, runs=1)
        frame = ExperimentHarness(config, settings).run_experiment()

        assert len(frame) == 1
        assert math.isnan(frame.loc[0, "lo"])
        assert math.isnan(frame.loc[0, "mean"])

    def test_bayes_mode(self, settings):
        """Test a Bayesian run with the bundled uniform prior."""
        config = _config(mode="bayes", prior="lending_uniform.prior", runs=1)
        frame = ExperimentHarness(config, settings).run_experiment()
        final = frame.iloc[-1]

        assert final["lo"] <= final["mean"] <= final["hi"]
        assert final["mean"] == pytest.approx(0.3, abs=0.15)

    def test_spec_from_file(self, settings):
        """Test that a spec file name in the configs directory is read."""
        harness = ExperimentHarness(_config(spec="lending_dem_parity.pse"), settings)

        assert harness.node == ExperimentHarness(_config(), settings).node


class TestCoverage:
    """Test suite for coverage experiments."""

    def test_demographic_parity(self, settings):
        """Test coverage of the demographic-parity monitor."""
        config = _config(kind="coverage", runs=30, steps=2000, threaded=False, workers=2)
        result = ExperimentHarness(config, settings).coverage()

        assert result.runs == 30
        assert result.fraction >= 0.9
        assert result.truth == pytest.approx(0.3)
        assert result.standard_error == pytest.approx(math.sqrt(result.fraction * (1 - result.fraction) / 30))

    def test_loose_delta(self, settings):
        """Test coverage at δ = 0.5."""
        config = _config(kind="coverage", delta=0.5, runs=30, steps=2000, threaded=False)
        result = ExperimentHarness(config, settings).coverage()

        assert result.fraction >= 0.48

    def test_constant_always_covered(self, settings):
        """Test that a constant expression is always covered."""
        config = _config(kind="coverage", spec="0.25", runs=5, steps=10, threaded=False)

        assert ExperimentHarness(config, settings).coverage().fraction == 1.0

    def test_threaded_runs(self, settings, monkeypatch):
        """Test that threaded coverage runs go through the producer thread and agree with plain runs."""
        calls = []
        original = ExperimentHarness._threaded_chunks

        def spy(harness, chain, seed):
            calls.append(seed)
            return original(harness, chain, seed)

        monkeypatch.setattr(ExperimentHarness, "_threaded_chunks", spy)
        threaded = ExperimentHarness(_config(kind="coverage", runs=4, steps=500, threaded=True), settings).coverage()
        plain = ExperimentHarness(_config(kind="coverage", runs=4, steps=500, threaded=False), settings).coverage()

        assert len(calls) == 4
        assert threaded == plain

    def test_sampled_chains(self, settings):
        """Test Bayesian coverage with chains drawn from the prior."""
        config = _config(
            kind="coverage",
            chain="two_state.json",
            spec="p(1,1) - p(2,1)",
            mode="bayes",
            prior=[[1, 1], [1, 1]],
            sample_from_prior=True,
            runs=30,
            steps=300,
            threaded=False,
        )
        result = ExperimentHarness(config, settings).coverage()

        assert result.truth is None
        assert result.fraction >= 0.85

    @pytest.mark.slow
    def test_demographic_parity_full(self, settings):
        """Test coverage over 500 runs of 10^4 steps."""
        config = _config(kind="coverage", runs=500, steps=10_000, threaded=False, workers=4)

        assert ExperimentHarness(config, settings).coverage().fraction >= 0.93


class TestErrorRatio:
    """Test suite for the baseline error-ratio study."""

    def test_ratio_table(self):
        """Test the analytic and empirical ratios up to n=10."""
        frame = error_ratio_study(10, 0.05, [1000, 4000], seed=0)

        assert frame["n"].tolist() == list(range(1, 11))
        assert frame.loc[0, "analytic_ratio"] == pytest.approx(1.0)
        assert frame.loc[9, "analytic_ratio"] == pytest.approx(1.274, abs=1e-3)
        assert (frame["analytic_ratio"].diff().dropna() > 0).all()
        for length in (1000, 4000):
            assert (frame[f"empirical_ratio_{length}"] - frame["analytic_ratio"]).abs().max() <= 1e-6

    def test_ratio_chain(self):
        """Test the chain behind the study."""
        chain = ratio_chain(3)

        assert chain.n == 4
        assert chain.matrix.prob(1, 4) == pytest.approx(0.25)
        assert chain.matrix.prob(3, 1) == 1.0
        assert ratio_spec(3) == "p(1,1) + p(1,2) + p(1,3)"

    def test_analytic_ratio(self):
        """Test the closed form at n=10."""
        assert analytic_error_ratio(10, 0.05) == pytest.approx(math.sqrt(math.log(400) / math.log(40)))

    def test_rejects_n_max(self):
        """Test that n_max must be positive."""
        with pytest.raises(ConfigError):
            error_ratio_study(0, 0.05)


class TestLatency:
    """Test suite for latency reports."""

    @pytest.mark.parametrize("mode", ["freq", "bayes"])
    def test_social_burden(self, settings, mode):
        """Test per-step latency on the admission chain."""
        config = _config(
            kind="latency",
            chain="admission.json",
            spec="admission_social_burden.pse",
            mode=mode,
            steps=2000,
            warmup=100,
        )
        report = ExperimentHarness(config, settings).latency_report()

        assert report.steps == 2000
        assert report.registers > 0
        assert report.mean_ns < 1_000_000

    def test_needs_warmup(self, settings):
        """Test that latency without warmup is refused."""
        harness = ExperimentHarness(_config(warmup=0), settings)

        with pytest.raises(HarnessError):
            harness.latency_report()


class TestEqualOpportunity:
    """Test suite for equal opportunity on the lending chain with equal grant rates."""

    def _eo(self, **overrides):
        data = {"chain": "lending_fair.json", "spec": "lending_equal_opportunity.pse"}
        data.update(overrides)
        return _config(**data)

    def test_coverage(self, settings):
        """Test that the frequentist interval covers a zero disparity."""
        config = self._eo(kind="coverage", runs=30, steps=3000, threaded=False)
        result = ExperimentHarness(config, settings).coverage()

        assert result.truth == pytest.approx(0.0, abs=1e-12)
        assert result.pending == 0
        assert result.fraction >= 0.9

    @pytest.mark.parametrize("mode", ["freq", "bayes"])
    def test_latency(self, settings, mode):
        """Test per-step latency for the size-5 expression."""
        harness = ExperimentHarness(self._eo(kind="latency", mode=mode, steps=2000, warmup=100), settings)
        report = harness.latency_report()

        assert size(harness.node) == 5
        assert report.steps == 2000
        assert report.registers > 0
        assert report.mean_ns < 1_000_000

    def test_prior_moves_estimate(self, settings):
        """Test that a prior expecting loans to go to gbar pulls the posterior mean down."""
        uniform = ExperimentHarness(
            self._eo(mode="bayes", prior="lending_uniform.prior", runs=1, steps=400), settings
        ).run_experiment()
        skeptical = ExperimentHarness(
            self._eo(mode="bayes", prior="lending_skeptical.prior", runs=1, steps=400), settings
        ).run_experiment()

        assert skeptical["state"].tolist() == uniform["state"].tolist()
        assert skeptical.iloc[-1]["mean"] < uniform.iloc[-1]["mean"] - 0.1

    def test_inline_prior(self, settings):
        """Test that a prior given as a list of rows matches the same prior read from a file."""
        rows = [[1] * 8 for _ in range(8)]
        rows[1][5] = 40
        rows[2][4] = 40
        inline = ExperimentHarness(self._eo(mode="bayes", prior=rows, runs=1, steps=400), settings)
        from_file = ExperimentHarness(
            self._eo(mode="bayes", prior="lending_skeptical.prior", runs=1, steps=400), settings
        )

        pd.testing.assert_frame_equal(
            inline.run_experiment().drop(columns="update_ns"),
            from_file.run_experiment().drop(columns="update_ns"),
        )


class TestConfigFiles:
    """Test suite for loading and executing experiment files."""

    def test_load_bundled_configs(self):
        """Test that every bundled experiment config validates."""
        for name in ("run", "coverage", "ratio", "latency"):
            config = load_experiment_config(CONFIGS_DIR / f"experiment_{name}.json")
            assert config.kind == name

        config = load_experiment_config(CONFIGS_DIR / "experiment_equal_opportunity.json")
        assert config.kind == "run"
        assert config.chain == "lending_fair.json"

    def test_missing_file(self, tmp_path):
        """Test that a missing config is a config error."""
        with pytest.raises(ConfigError):
            load_experiment_config(tmp_path / "absent.json")

    def test_invalid_file(self, tmp_path):
        """Test that an invalid config is a config error."""
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"kind": "run", "spec": "p(1,1)"}))

        with pytest.raises(ConfigError):
            load_experiment_config(path)

    def test_execute_ratio(self, tmp_path, settings):
        """Test executing a ratio experiment from a file."""
        path = tmp_path / "ratio.json"
        path.write_text(json.dumps({"kind": "ratio", "n_max": 3, "trace_lengths": [500, 1000]}))
        config, frame = load_and_execute(path, settings)

        assert config.kind == "ratio"
        assert len(frame) == 3
