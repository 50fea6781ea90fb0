import math

import pandas as pd
import pytest

from utils.artifact_store import ArtifactStore
from utils.config import (
    RunConfig,
    apply_overrides,
    load_config,
    parse_config_text,
    require_valid,
    validate,
)
from utils.errors import ConfigError
from utils.trial_coordinator import WORKERS_ENV

BER_INI = """\
[experiment]
; error floors with imperfect CSI
experiment = ber
schemes = ar, tr
N = 200
beta = 0, 0.05, 0.1
sigma_xi2 = 0.05, 0, 0.1
snr_db = 0, 10, 20
trials = 5000
"""


def _fatal_keys(config):
    return {d.key for d in validate(config) if d.is_fatal}


class TestParsing:

    def test_flat_ini(self):
        config, diagnostics = parse_config_text(BER_INI)
        assert diagnostics == []
        assert config.experiment == "ber"
        assert config.schemes == ["ar", "tr"]
        assert config.N == 200
        assert config.snr_db == [0.0, 10.0, 20.0]
        assert config.pairs() == [(0.0, 0.05), (0.05, 0.0), (0.1, 0.1)]
        assert validate(config) == []

    def test_unknown_key_is_a_warning_with_its_line(self):
        _, diagnostics = parse_config_text(BER_INI + "colour = blue\n")
        assert len(diagnostics) == 1
        assert diagnostics[0].level == "warning"
        assert diagnostics[0].key == "colour"
        assert diagnostics[0].line == 10

    def test_unparseable_value_is_fatal(self):
        _, diagnostics = parse_config_text("[experiment]\nN = many\n")
        assert diagnostics[0].is_fatal
        assert diagnostics[0].key == "N"
        assert diagnostics[0].line == 2

    def test_integers_written_as_floats(self):
        config, _ = parse_config_text("[experiment]\ntrials = 1e4\n")
        assert config.trials == 10000

    def test_missing_section(self):
        with pytest.raises(ConfigError, match="cannot parse configuration"):
            parse_config_text("[other]\nN = 3\n")

    def test_defaults(self):
        config = RunConfig()
        assert config.snr_db[-1] == 40.0
        assert config.sigma_xi2 == [0.05, 0.0, 0.1]
        assert config.system_config().L == 50


class TestValidation:

    def test_zero_iota_is_fatal(self):
        config, _ = parse_config_text("[experiment]\niota = 0\n")
        problems = [d for d in validate(config) if d.key == "iota"]
        assert problems[0].is_fatal
        assert problems[0].line == 2

    def test_heavy_load_warns(self):
        config = RunConfig(beta=[1.5], sigma_xi2=[0.0])
        diagnostics = validate(config)
        assert any("beta>1 unusual" in d.message and not d.is_fatal for d in diagnostics)

    def test_sigma_and_training_are_exclusive(self):
        config = RunConfig(sigma_xi2=[0.1], training_amplitude=1.0, training_length=63)
        assert "sigma_xi2" in _fatal_keys(config)

    def test_training_length_must_be_an_m_sequence_length(self):
        config = RunConfig(experiment="estimation", training_amplitude=1.0, training_length=100)
        assert "training_length" in _fatal_keys(config)
        config = RunConfig(experiment="estimation", training_amplitude=1.0, training_length=127)
        assert config.register_length == 7
        assert _fatal_keys(config) == set()

    def test_chip_duration_must_match_bandwidth(self):
        config, _ = parse_config_text("[experiment]\nchip_duration = 2e-9\nbandwidth = 1e9\n")
        assert "chip_duration" in _fatal_keys(config)
        config, _ = parse_config_text("[experiment]\nchip_duration = 2e-9\niota = 2\n")
        assert config.resolved_bandwidth == pytest.approx(1e9)
        assert _fatal_keys(config) == set()

    def test_mismatched_pairs(self):
        config = RunConfig(beta=[0.0, 0.1], sigma_xi2=[0.0, 0.1, 0.2])
        assert "sigma_xi2" in _fatal_keys(config)

    def test_rank_deficient_zf_training(self):
        config = RunConfig(experiment="estimation", training_amplitude=1.0, training_length=7,
                           users=4, estimator="zf", N=64, delay_spread=20e-9)
        assert "users" in _fatal_keys(config)

    def test_more_users_than_training_shifts(self):
        config = RunConfig(experiment="estimation", training_amplitude=1.0, training_length=31,
                           users=40, estimator="rzf", N=64, delay_spread=3e-9)
        assert "users" in _fatal_keys(config)
        config.users = 2
        assert _fatal_keys(config) == set()

    def test_require_valid_collects_all_fatal_diagnostics(self):
        config = RunConfig(iota=0, trials=0, mi_mode="exact")
        with pytest.raises(ConfigError) as info:
            require_valid(config)
        assert {"iota", "trials", "mi_mode"} <= {d.key for d in info.value.diagnostics}


class TestOverrides:

    def test_precedence(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "3")
        config = RunConfig()
        assert apply_overrides(config).workers == 3

        config = RunConfig(workers=2)
        assert apply_overrides(config).workers == 2
        assert apply_overrides(config, workers=5, seed=9, output="elsewhere").workers == 5
        assert config.seed == 9
        assert config.output == "elsewhere"

    def test_bad_environment_value_falls_back(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "lots")
        assert apply_overrides(RunConfig()).workers == 1


class TestResultHeader:

    def test_configuration_reloads_from_a_result_table(self, tmp_path):
        config, _ = parse_config_text(BER_INI)
        store = ArtifactStore(str(tmp_path))
        path = store.save_table("ber", pd.DataFrame({"snr_db": [0.0], "pe": [0.1]}), config.provenance())

        reloaded, diagnostics = load_config(path)
        assert diagnostics == []
        assert reloaded.provenance() == config.provenance()
        assert reloaded.pairs() == config.pairs()
        assert not math.isnan(reloaded.pairs()[0][1])
