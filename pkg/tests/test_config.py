import pytest

from semlle.config import (AblationSwitches, ConfigError, TrainConfig, desk_config, dump_config, load_config,
                           parse_config)
from semlle.objective import LossSwitches


def test_defaults():
    cfg = TrainConfig()
    assert cfg.lr == 3e-4 and cfg.batch_size == 16 and cfg.epochs == 500
    assert cfg.weights.pix == 1.0 and cfg.weights.mul == 0.01
    assert cfg.prompts.low_prompt == "low-light image"
    assert parse_config("") == cfg


def test_nested_sections():
    cfg = parse_config("""
lr: 0.001
betas: [0.8, 0.9]
weights: {edge: 0.5}
ablation:
  c2f: false
net:
  base_width: 8
prompts:
  low_prompt: dark photo
""")
    assert cfg.lr == 0.001 and cfg.betas == (0.8, 0.9)
    assert cfg.weights.edge == 0.5 and cfg.weights.pix == 1.0
    assert cfg.ablation == AblationSwitches(c2f=False)
    assert cfg.effective_net().c2f is False and cfg.effective_net().base_width == 8
    assert cfg.prompts.low_prompt == "dark photo"


def test_round_trip():
    cfg = desk_config(seed=7, losses=LossSwitches(mul=False))
    assert parse_config(dump_config(cfg)) == cfg


def test_unknown_field_reports_line():
    with pytest.raises(ConfigError, match=r":3: unknown field 'learning_rate'"):
        parse_config("lr: 0.1\nseed: 1\nlearning_rate: 2\n")


def test_unknown_nested_field_reports_line():
    with pytest.raises(ConfigError, match=r":3: unknown field 'gamma'"):
        parse_config("net:\n  scales: 3\n  gamma: 2\n")


def test_invalid_values():
    with pytest.raises(ConfigError, match="learning rate"):
        parse_config("lr: -1\n")
    with pytest.raises(ConfigError):
        parse_config("weights: {pix: 0, edge: 0, sem: 0, mul: 0}\n")
    with pytest.raises(ConfigError):
        parse_config("net: 3\n")


def test_malformed_yaml_reports_line():
    with pytest.raises(ConfigError, match=":2"):
        parse_config("lr: 0.1\n  bad: [\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "none.yaml")


def test_ablation_flags_disable_losses():
    cfg = TrainConfig(ablation=AblationSwitches(image_prior=False, text_prior=False))
    assert cfg.effective_losses() == LossSwitches(pix=True, edge=True, sem=False, mul=False)
    assert cfg.effective_net().image_prior is False
