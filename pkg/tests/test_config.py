import pytest

from caliblab.config import ExperimentConfig, parse_config
from caliblab.errors import ConfigError

GOOD = """
[experiment]
kind = interval-sweep
replicates = 2
base_seed = 11
arms = erm+oracle-ts,dmixup-oracle

[distribution]
k = 4
alpha_grid = 0.2,0.8
n_train = 200

[train]
epochs = 5
batch_size = 50
hidden = 32,16

[metrics]
n_mc = 500
mix_cap = 0.1
"""


class TestParse:
    def test_round_trip_values(self):
        cfg = parse_config(GOOD)
        assert cfg.kind == "interval-sweep"
        assert cfg.replicates == 2
        assert cfg.base_seed == 11
        assert cfg.arms == ("erm+oracle-ts", "dmixup-oracle")
        assert cfg.distribution["k"] == 4
        assert cfg.distribution["alpha_grid"] == (0.2, 0.8)
        assert cfg.train["hidden"] == (32, 16)
        assert cfg.metrics["mix_cap"] == 0.1

    def test_defaults_fill_missing_keys(self):
        cfg = parse_config("[experiment]\nkind = gaussian-sweep\n")
        assert cfg.replicates == 5
        assert cfg.distribution["mu_grid"] == (0.25, 0.05, 0.01)
        assert cfg.arms == ("erm+ts", "mixup")
        assert cfg.metrics["n_bins"] == 15

    def test_comments_and_blank_lines(self):
        cfg = parse_config("# top\n[experiment]\n# inline\nkind = oracle-verify\n\n")
        assert cfg.kind == "oracle-verify"
        assert cfg.oracle["n_datasets"] == 50

    def test_snapshot_is_json_ready(self):
        import json

        snap = parse_config(GOOD).snapshot()
        assert json.loads(json.dumps(snap)) == snap


class TestStrictness:
    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("[experiment]\nkind = gaussian-sweep\nbogus = 1\n")

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config("[experiment]\nkind = gaussian-sweep\n[extra]\nx = 1\n")

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError, match="unknown experiment kind"):
            parse_config("[experiment]\nkind = nonsense\n")

    def test_missing_kind_rejected(self):
        with pytest.raises(ConfigError, match="declare kind"):
            parse_config("[experiment]\nreplicates = 1\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="bad value"):
            parse_config("[experiment]\nkind = gaussian-sweep\nreplicates = soon\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate key"):
            parse_config("[experiment]\nkind = oracle-verify\nbase_seed = 1\nbase_seed = 2\n")

    def test_key_outside_section_rejected(self):
        with pytest.raises(ConfigError, match="outside any section"):
            parse_config("kind = gaussian-sweep\n")

    def test_invalid_arm_for_kind(self):
        with pytest.raises(ConfigError, match="not valid"):
            parse_config("[experiment]\nkind = gaussian-sweep\narms = dmixup-oracle\n")

    def test_empty_grid_rejected(self):
        with pytest.raises(ConfigError, match="alpha_grid"):
            parse_config(
                "[experiment]\nkind = interval-sweep\n[distribution]\nalpha_grid =\n"
            )

    def test_bad_cal_fraction(self):
        with pytest.raises(ConfigError, match="cal_fraction"):
            parse_config(
                "[experiment]\nkind = gaussian-sweep\n[distribution]\ncal_fraction = 1.5\n"
            )


class TestOverrides:
    def test_cli_style_overrides_win(self):
        cfg = parse_config(GOOD, base_seed=99, replicates=1, arms=("dmixup-oracle",))
        assert cfg.base_seed == 99
        assert cfg.replicates == 1
        assert cfg.arms == ("dmixup-oracle",)

    def test_override_arms_still_validated(self):
        with pytest.raises(ConfigError):
            parse_config(GOOD, arms=("mixup",))
