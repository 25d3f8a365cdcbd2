"""Configuration layering, profiles, seeding and the config hash."""

from pathlib import Path

import numpy as np
import pytest

from goalsynth.config import Config, deep_merge, rng_for
from goalsynth.exceptions import ConfigurationError

EXAMPLE_DIR = Path(__file__).resolve().parents[1] / "example"


class TestLayering:

    def test_defaults(self, config):
        assert config["search.generations"] == 8192
        assert config["training.k"] == 1024
        assert len(config["search.exemplars"]) == 9
        assert config.path("corpus_dir") is None
        assert "search.updates" in config
        assert "search.nothing" not in config

    def test_desk_profile(self):
        config = Config(profiles=["desk"])
        assert config["search.max_preferences"] == 2
        assert config["search.exemplars"] == [
            "throwAttempt", "itemInClosedDrawerAtEnd", "watchOnShelf"]
        # untouched keys keep their defaults
        assert config["search.min_preferences"] == 1
        assert config["training.learning_rate"] == 4e-3

    def test_unknown_profile(self, config):
        with pytest.raises(ConfigurationError, match="Unknown profile"):
            config.apply_profile("laptop")

    def test_ablation_profile_zeroes_operators(self, config):
        config.apply_profile("no_custom_ops")
        weights = config["search.operator_weights"]
        assert weights["resample_setup"] == 0.0
        assert weights["crossover"] == 1.0

    def test_file_then_cli(self, tmp_path):
        path = tmp_path / "config.yml"
        path.write_text("seed: 4\nsearch:\n  updates: 10\n  generations: 20\n")
        config = Config(path, cli_args={"search.generations": 5, "seed": None})
        assert config["seed"] == 4
        assert config["search.updates"] == 10
        assert config["search.generations"] == 5

    def test_environment_overrides_paths(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GOALSYNTH_OUTPUT_DIR", str(tmp_path))
        assert Config().path("output_dir") == tmp_path

    def test_include(self, tmp_path):
        (tmp_path / "search.yml").write_text("updates: 7\nmax_preferences: 3\n")
        (tmp_path / "config.yml").write_text("search: !include search.yml\n")
        config = Config(tmp_path / "config.yml")
        assert config["search.updates"] == 7
        assert config["search.max_preferences"] == 3

    def test_missing_include(self, tmp_path):
        (tmp_path / "config.yml").write_text("search: !include nowhere.yml\n")
        with pytest.raises(ConfigurationError, match="not found"):
            Config(tmp_path / "config.yml")

    def test_example_file_adds_a_profile(self):
        config = Config(EXAMPLE_DIR / "config.yml", profiles=["desk", "quick"])
        assert config["seed"] == 7
        assert config["search.log_every"] == 5
        assert config["search.generations"] == 20
        assert config["training.m"] == 16
        assert config.profiles == ["desk", "quick"]

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            Config(tmp_path / "absent.yml")

    def test_deep_merge_keeps_siblings(self):
        merged = deep_merge({"a": {"b": 1, "c": 2}}, {"a": {"c": 3}})
        assert merged == {"a": {"b": 1, "c": 3}}


class TestValidation:

    @pytest.mark.parametrize("args", [
        {"training.k": 10, "training.m": 5},
        {"training.learning_rate": 0},
        {"search.min_preferences": 3, "search.max_preferences": 2},
        {"search.exemplars": ["throwAttempt", "juggling"]},
        {"search.operator_weights": {"teleport": 1.0}},
        {"seed": -1},
    ])
    def test_rejected(self, args):
        with pytest.raises(ConfigurationError):
            Config(cli_args=args)

    def test_all_operators_disabled(self):
        weights = {op: 0.0 for op in Config.DEFAULTS["search"]["operator_weights"]}
        with pytest.raises(ConfigurationError):
            Config(cli_args={"search.operator_weights": weights})


class TestSeeding:

    def test_streams_are_reproducible(self):
        a = rng_for(3, "search", 7).integers(1 << 30, size=4)
        b = rng_for(3, "search", 7).integers(1 << 30, size=4)
        np.testing.assert_array_equal(a, b)

    def test_streams_are_independent(self):
        a = rng_for(3, "search", 7).integers(1 << 30, size=4)
        assert not np.array_equal(a, rng_for(3, "search", 8).integers(1 << 30, size=4))
        assert not np.array_equal(a, rng_for(3, "negatives", 7).integers(1 << 30, size=4))
        assert not np.array_equal(a, rng_for(4, "search", 7).integers(1 << 30, size=4))


class TestConfigHash:

    def test_stable(self, config):
        assert config.config_hash() == Config().config_hash()
        assert len(config.config_hash()) == 16

    def test_paths_do_not_change_the_hash(self, config):
        other = Config(cli_args={"paths.output_dir": "elsewhere"})
        assert other.config_hash() == config.config_hash()

    def test_settings_change_the_hash(self, config):
        assert Config(cli_args={"seed": 1}).config_hash() != config.config_hash()
        assert Config(profiles=["desk"]).config_hash() != config.config_hash()
