"""Training configuration and its YAML file format.

The file mirrors the :class:`TrainConfig` field names; nested sections map to
the nested dataclasses. Unknown keys and type errors are reported with the line
number of the offending entry.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .network import NetConfig
from .objective import LossSwitches, LossWeights
from .text_prior import PromptPair


class ConfigError(ValueError):
    """Raised for unreadable or invalid configuration files."""


@dataclass(frozen=True)
class AblationSwitches:
    image_prior: bool = True
    text_prior: bool = True
    c2f: bool = True


@dataclass(frozen=True)
class SegmentationConfig:
    seed: int = 0
    num_classes: int = 21
    weights: str | None = None


@dataclass(frozen=True)
class VisionLanguageConfig:
    seed: int = 0
    embed_dim: int = 512
    image_weights: str | None = None
    text_weights: str | None = None


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4
    batch_size: int = 16
    epochs: int = 500
    max_steps: int | None = None
    betas: tuple = (0.9, 0.999)
    seed: int = 0
    patch: int | None = None
    flip: bool = True
    checkpoint_every: int = 0
    weights: LossWeights = LossWeights()
    prompts: PromptPair = PromptPair()
    net: NetConfig = NetConfig()
    ablation: AblationSwitches = AblationSwitches()
    losses: LossSwitches = LossSwitches()
    segmentation: SegmentationConfig = SegmentationConfig()
    vision_language: VisionLanguageConfig = VisionLanguageConfig()

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError(f"learning rate must be non-negative, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        object.__setattr__(self, "betas", tuple(self.betas))

    def effective_net(self) -> NetConfig:
        return dataclasses.replace(self.net, image_prior=self.ablation.image_prior, c2f=self.ablation.c2f)

    def effective_losses(self) -> LossSwitches:
        """Loss switches after the ablation flags: no image prior drops the semantic
        term and no text prior drops the multimodal term."""
        s = self.losses
        return LossSwitches(pix=s.pix, edge=s.edge, sem=s.sem and self.ablation.image_prior,
                            mul=s.mul and self.ablation.text_prior)


def desk_config(**overrides) -> TrainConfig:
    """Defaults sized for the 32x32 overfit suite on a CPU."""
    base = dict(lr=2e-3, batch_size=4, epochs=500, max_steps=500)
    base.update(overrides)
    return TrainConfig(**base)


def _line(node) -> int:
    return node.start_mark.line + 1


def _build(cls, node, path):
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{path}:{_line(node)}: expected a mapping for {cls.__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key_node, value_node in node.value:
        key = key_node.value
        if key not in fields:
            raise ConfigError(f"{path}:{_line(key_node)}: unknown field {key!r} for {cls.__name__}")
        default = fields[key].default
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value_node, path)
        else:
            kwargs[key] = yaml.safe_load(yaml.serialize(value_node))
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}:{_line(node)}: invalid {cls.__name__}: {exc}") from exc


def parse_config(text: str, path="<string>") -> TrainConfig:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f":{mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{path}{where}: {getattr(exc, 'problem', exc)}") from exc
    if node is None:
        return TrainConfig()
    return _build(TrainConfig, node, path)


def load_config(path) -> TrainConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), path)


def config_to_dict(cfg) -> dict:
    d = dataclasses.asdict(cfg)
    d["betas"] = list(d["betas"])
    return d


def dump_config(cfg: TrainConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
