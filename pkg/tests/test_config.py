"""Tests for pipeline configuration loading and validation."""

import pytest

from rxncond.config import PipelineConfig, build_config, load_config
from rxncond.errors import ConfigError


class TestDefaults:
    def test_defaults(self):
        config = load_config()
        assert config.k_out == 10
        assert config.tournament_k == 50
        assert config.delta == 0.5
        assert config.panel == ("Full", "Cat", "Sol", "Rea")
        assert config.ablations == ()

    def test_salience_weights(self):
        weights = PipelineConfig(top_n=2).salience_weights()
        assert weights.top_n == 2
        assert weights.w_role == {"electrophile": 0.5, "nucleophile": 0.4, "neutral": 0.1}

    def test_judge_spec_defaults_to_heuristic(self):
        assert PipelineConfig().judge_spec("Cat") == "heuristic"


class TestLoad:
    def test_yaml_mapping(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(
            "k_out: 3\n"
            "ablations: [no_pairing]\n"
            "facet_weights: {fg: 0.5, mcs: 0.25, fingerprint: 0.25}\n"
            "judges:\n"
            "  Cat: replay:cat.jsonl\n"
        )
        config = load_config(path)
        assert config.k_out == 3
        assert config.has_ablation("no_pairing")
        assert config.facet_weights.fg == 0.5
        assert config.judge_spec("Cat") == "replay:cat.jsonl"

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_config(path) == PipelineConfig()

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("k_outt: 3\n")
        with pytest.raises(ConfigError) as excinfo:
            load_config(path)
        assert excinfo.value.key == "k_outt"

    def test_out_of_range(self):
        with pytest.raises(ConfigError) as excinfo:
            build_config({"delta": 1.5})
        assert excinfo.value.key == "delta"

    def test_duplicate_keys_rejected(self, tmp_path):
        path = tmp_path / "dup.yaml"
        path.write_text("k_out: 3\nk_out: 4\n")
        with pytest.raises(ConfigError, match="invalid YAML"):
            load_config(path)

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "none.yaml")


class TestValidation:
    def test_facet_weights_must_sum_to_one(self):
        with pytest.raises(ConfigError, match="facet_weights"):
            build_config({"facet_weights": {"fg": 0.5, "mcs": 0.5, "fingerprint": 0.5}})

    def test_unknown_ablation(self):
        with pytest.raises(ConfigError):
            build_config({"ablations": ["no_everything"]})

    @pytest.mark.parametrize(
        "judges",
        [{"Boss": "heuristic"}, {"Cat": "replay"}, {"Sol": "oracle:x"}, {"Rea": "heuristic:x"}],
    )
    def test_bad_judges(self, judges):
        with pytest.raises(ConfigError, match="judges"):
            build_config({"judges": judges})

    def test_panel_is_put_in_turn_order(self):
        assert build_config({"panel": ["Rea", "Full"]}).panel == ("Full", "Rea")

    def test_panel_rejects_duplicates_and_empty(self):
        with pytest.raises(ConfigError):
            build_config({"panel": ["Cat", "Cat"]})
        with pytest.raises(ConfigError):
            build_config({"panel": []})


class TestOverridesAndDigest:
    def test_none_overrides_are_ignored(self):
        config = PipelineConfig().with_overrides(seed=None, k_out=4)
        assert config.k_out == 4
        assert config.seed == 0

    def test_overrides_are_validated(self):
        with pytest.raises(ConfigError):
            PipelineConfig().with_overrides(k_out=0)

    def test_digest_is_stable(self):
        assert PipelineConfig().digest() == PipelineConfig().digest()
        assert PipelineConfig().digest() != PipelineConfig(seed=1).digest()
        assert len(PipelineConfig().digest()) == 64
