"""Run configuration: strict parsing, overrides, and seed derivation."""

import json

import pytest

from diarkit.config import RunConfig, stage_seed
from diarkit.errors import ConfigError


class TestDefaults:
    def test_default_tree(self):
        cfg = RunConfig()
        assert cfg.seed == 0
        assert cfg.splits.n_train == 200
        assert cfg.splits.n_test == 20
        assert cfg.corpus.words_per_dialogue == 500
        assert cfg.corpus.turn_mean == 6.0
        assert cfg.net.epochs == 20
        assert cfg.scoring.collar == 0.25
        assert cfg.cluster.bic_lambda == 1.0

    def test_frozen(self):
        with pytest.raises(Exception):
            RunConfig().seed = 5  # type: ignore[misc]


class TestRoundTrip:
    def test_dict_round_trip(self):
        cfg = RunConfig(seed=42)
        assert RunConfig.from_dict(cfg.to_dict()) == cfg

    def test_json_round_trip(self, tmp_path):
        cfg = RunConfig(seed=9)
        p = tmp_path / "run.json"
        p.write_text(cfg.to_json())
        assert RunConfig.from_json_file(p) == cfg

    def test_partial_dict_fills_defaults(self):
        cfg = RunConfig.from_dict({"seed": 3, "net": {"epochs": 2}})
        assert cfg.seed == 3
        assert cfg.net.epochs == 2
        assert cfg.net.hidden_size == RunConfig().net.hidden_size

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown keys"):
            RunConfig.from_dict({"sede": 3})

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError, match=r"net.*unknown keys"):
            RunConfig.from_dict({"net": {"hidden": 64}})

    def test_type_mismatch(self):
        with pytest.raises(ConfigError, match="expected an integer"):
            RunConfig.from_dict({"seed": "seven"})
        with pytest.raises(ConfigError, match="expected a number"):
            RunConfig.from_dict({"corpus": {"turn_mean": "big"}})

    def test_bool_is_not_an_int(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"seed": True})

    def test_int_accepted_for_float_field(self):
        cfg = RunConfig.from_dict({"corpus": {"turn_mean": 4}})
        assert cfg.corpus.turn_mean == 4.0
        assert isinstance(cfg.corpus.turn_mean, float)

    def test_invalid_json_file(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            RunConfig.from_json_file(p)

    def test_non_object_json_file(self, tmp_path):
        p = tmp_path / "list.json"
        p.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="top level"):
            RunConfig.from_json_file(p)


class TestOverrides:
    def test_nested_override(self):
        cfg = RunConfig().with_overrides(["corpus.turn_mean=4.5", "seed=11"])
        assert cfg.corpus.turn_mean == 4.5
        assert cfg.seed == 11

    def test_override_preserves_other_fields(self):
        cfg = RunConfig().with_overrides(["net.epochs=3"])
        assert cfg.net.epochs == 3
        assert cfg.net.hidden_size == RunConfig().net.hidden_size

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="key=value"):
            RunConfig().with_overrides(["seed:7"])

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            RunConfig().with_overrides(["net.hidden=64"])

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown config section"):
            RunConfig().with_overrides(["model.hidden_size=64"])

    def test_unparseable_value(self):
        with pytest.raises(ConfigError, match="cannot parse"):
            RunConfig().with_overrides(["seed=pi"])


class TestHashAndSeeds:
    def test_hash_is_stable(self):
        assert RunConfig(seed=1).config_hash() == RunConfig(seed=1).config_hash()

    def test_hash_distinguishes_configs(self):
        a = RunConfig(seed=1).config_hash()
        b = RunConfig(seed=2).config_hash()
        c = RunConfig().with_overrides(["net.epochs=19"]).config_hash()
        assert len({a, b, c}) == 3

    def test_hash_ignores_key_order(self):
        cfg = RunConfig(seed=5)
        reordered = json.loads(json.dumps(cfg.to_dict()))
        assert RunConfig.from_dict(reordered).config_hash() == cfg.config_hash()

    def test_stage_seed_deterministic(self):
        assert stage_seed(7, "synth") == stage_seed(7, "synth")

    def test_stage_seed_separates_stages_and_seeds(self):
        seen = {
            stage_seed(7, "synth"),
            stage_seed(7, "train"),
            stage_seed(8, "synth"),
        }
        assert len(seen) == 3

    def test_stage_seed_range(self):
        for s in (0, 1, 2**31, 12345):
            v = stage_seed(s, "x")
            assert 0 <= v < 2**63
