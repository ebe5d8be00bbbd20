import pytest

from aspectmf.config import ConfigError, load_config, parse_config_text, save_config
from aspectmf.model import HyperParams


class TestConfigFile:
    def test_roundtrip(self, tmp_path):
        hyper = HyperParams(D=7, gamma_P=0.123, lambda_Wt=0.007, max_iter=55,
                            snapshot_best=True, seed=99)
        path = tmp_path / "h.cfg"
        save_config(hyper, path)
        again = load_config(path)
        assert again == hyper

    def test_partial_overrides_defaults(self):
        hyper = parse_config_text("D = 9\ngamma_bu = 0.5\n")
        assert hyper.D == 9
        assert hyper.gamma_bu == 0.5
        assert hyper.lambda_P == HyperParams().lambda_P

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config_text("gamma_bogus = 0.1\n")

    def test_typo_of_known_key_rejected(self):
        with pytest.raises(ConfigError, match="lambda_Qt"):
            parse_config_text("lambda_Qt = 0.1\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="cannot parse"):
            parse_config_text("D = three\n")

    def test_bad_line_rejected(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config_text("just some words\n")

    def test_comments_and_blanks_ignored(self):
        hyper = parse_config_text("# header\n\nD = 4  # trailing comment\n")
        assert hyper.D == 4

    def test_boolean_parsing(self):
        assert parse_config_text("snapshot_best = true\n").snapshot_best is True
        assert parse_config_text("snapshot_best = 0\n").snapshot_best is False
        with pytest.raises(ConfigError):
            parse_config_text("snapshot_best = maybe\n")

    def test_invalid_resulting_hyper_rejected(self):
        with pytest.raises(ValueError):
            parse_config_text("lr_decay = 1.5\n")

    def test_base_overlay(self):
        base = HyperParams(D=3, gamma_P=0.2)
        hyper = parse_config_text("max_iter = 2\n", base=base)
        assert hyper.D == 3 and hyper.gamma_P == 0.2 and hyper.max_iter == 2
