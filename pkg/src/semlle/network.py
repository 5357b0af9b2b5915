"""Reflectance refinement network, illumination brightening and the full enhancer.

The enhancer splits the low-light input into illumination and reflectance,
brightens the illumination with a learned per-pixel gamma, refines the
reflectance with a multi-scale encoder-decoder that injects segmentation
features through SEM blocks, and multiplies the two back together. With
coarse-to-fine enabled a half-resolution pass (using the deeper prior scales)
conditions the full-resolution pass.

Tensors inside the network are channel-first; the public entry points take and
return channel-last images like the rest of the package.
"""

from __future__ import annotations

import dataclasses
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .retinex import decompose
from .sem_attention import SemanticEmbedding
from .semantic_prior import SegmentationBackend, SemanticPrior

GAMMA_MIN = 0.1
GAMMA_MAX = 1.0
GAMMA_INIT = 0.2
LOG_FLOOR = 1e-3


@dataclass(frozen=True)
class NetConfig:
    scales: int = 3
    base_width: int = 16
    large: bool = False
    c2f: bool = True
    image_prior: bool = True
    illum_width: int = 8
    zero_head: bool = False

    def __post_init__(self):
        if self.scales < 1:
            raise ValueError(f"scales must be >= 1, got {self.scales}")
        if self.c2f and self.scales < 2:
            raise ValueError("coarse-to-fine needs at least 2 scales")

    @property
    def widths(self) -> tuple:
        base = 2 * self.base_width if self.large else self.base_width
        return tuple(base * 2**b for b in range(self.scales))

    @property
    def divisor(self) -> int:
        return 2 ** (self.scales - 1)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "NetConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown NetConfig fields: {sorted(unknown)}")
        return cls(**d)


class ConvBlock(nn.Module):
    def __init__(self, in_ch, out_ch, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)

    def forward(self, x):
        x = F.leaky_relu(self.conv1(x), 0.2)
        return F.leaky_relu(self.conv2(x), 0.2)


class ReflectanceNet(nn.Module):
    """U-shaped encoder-decoder with an optional SEM block after each encoder stage."""

    def __init__(self, in_ch: int, widths, sem_widths=None):
        super().__init__()
        self.widths = tuple(widths)
        self.encoders = nn.ModuleList(
            ConvBlock(in_ch if b == 0 else self.widths[b - 1], w, stride=1 if b == 0 else 2)
            for b, w in enumerate(self.widths)
        )
        if sem_widths is not None:
            self.sems = nn.ModuleList(SemanticEmbedding(w, s) for w, s in zip(self.widths, sem_widths))
        else:
            self.sems = None
        self.decoders = nn.ModuleList(
            ConvBlock(self.widths[b + 1] + self.widths[b], self.widths[b]) for b in range(len(self.widths) - 1)
        )
        self.head = nn.Conv2d(self.widths[0], 3, 1)

    def forward(self, x, sem_feats=None):
        skips = []
        for b, enc in enumerate(self.encoders):
            x = enc(x)
            if self.sems is not None:
                f = self.sems[b](x.permute(0, 2, 3, 1), sem_feats[b])
                x = f.permute(0, 3, 1, 2)
            skips.append(x)
        for b in reversed(range(len(self.decoders))):
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            x = self.decoders[b](torch.cat([x, skips[b]], dim=1))
        return torch.sigmoid(self.head(x))


class IlluminationAdjust(nn.Module):
    """Three-layer head predicting a per-pixel gamma in [0.1, 1]."""

    def __init__(self, width: int = 8):
        super().__init__()
        self.conv1 = nn.Conv2d(1, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)
        self.conv3 = nn.Conv2d(width, 1, 3, padding=1)

    def gamma(self, illum):
        # log-domain input keeps dark illumination (~1e-2) from vanishing in conv1
        x = torch.log(illum.clamp_min(LOG_FLOOR)) / -math.log(LOG_FLOOR)
        h = F.leaky_relu(self.conv1(x), 0.2)
        h = F.leaky_relu(self.conv2(h), 0.2)
        return GAMMA_MIN + (GAMMA_MAX - GAMMA_MIN) * torch.sigmoid(self.conv3(h))

    def forward(self, illum):
        return apply_gamma(illum, self.gamma(illum))


def apply_gamma(illum, gamma):
    """``illum ** gamma`` with exact zeros and a finite gradient at zero illumination."""
    if not isinstance(illum, torch.Tensor):
        return np.power(np.asarray(illum, dtype=np.float64), gamma)
    safe = illum.clamp_min(1e-12)
    return torch.where(illum > 0, safe**gamma, torch.zeros_like(illum))


class Enhancer(nn.Module):
    """Trainable parameters of the whole enhancement pipeline."""

    def __init__(self, cfg: NetConfig = NetConfig(), sem_widths=None):
        super().__init__()
        self.cfg = cfg
        if cfg.image_prior:
            if sem_widths is None or len(sem_widths) != cfg.scales:
                raise ValueError(f"image prior needs {cfg.scales} semantic widths, got {sem_widths}")
            sem_widths = tuple(int(s) for s in sem_widths)
        else:
            sem_widths = None
        self.sem_widths = sem_widths
        widths = cfg.widths
        self.illumination = IlluminationAdjust(cfg.illum_width)
        if cfg.c2f:
            self.coarse = ReflectanceNet(3, widths[1:], sem_widths[1:] if sem_widths else None)
            self.fine = ReflectanceNet(6, widths, sem_widths)
        else:
            self.coarse = None
            self.fine = ReflectanceNet(3, widths, sem_widths)

    def refine(self, refl, prior: SemanticPrior | None):
        """Refined reflectance for a channel-last batch; output in (0, 1)."""
        cfg = self.cfg
        if refl.shape[-3] % cfg.divisor or refl.shape[-2] % cfg.divisor:
            raise ValueError(f"image size {refl.shape[-3]}x{refl.shape[-2]} must be divisible by {cfg.divisor}")
        feats = None
        if cfg.image_prior:
            if prior is None:
                raise ValueError("this network uses the image prior; pass a SemanticPrior")
            feats = list(prior.features)
            if len(feats) != cfg.scales:
                raise ValueError(f"prior has {len(feats)} scales, network expects {cfg.scales}")
        x = refl.permute(0, 3, 1, 2)
        if self.coarse is not None:
            coarse = self.coarse(F.avg_pool2d(x, 2), feats[1:] if feats else None)
            coarse = F.interpolate(coarse, size=x.shape[-2:], mode="bilinear", align_corners=False)
            x = torch.cat([x, coarse], dim=1)
        return self.fine(x, feats).permute(0, 2, 3, 1)

    def adjust_illumination(self, illum):
        return self.illumination(illum.permute(0, 3, 1, 2)).permute(0, 2, 3, 1)

    def forward(self, low, prior: SemanticPrior | None = None):
        illum, refl = decompose(low)
        out = self.adjust_illumination(illum) * self.refine(refl, prior)
        return out.clamp(0.0, 1.0)


def init_parameters(model: nn.Module, seed: int) -> nn.Module:
    """Kaiming-uniform (fan-in) kernels, zero biases, unit/zero layer norms.

    Reflectance heads get a kernel scaled by 1e-2 (or exactly zero with
    ``cfg.zero_head``) so training starts near the neutral 0.5 reflectance.
    """
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, mod in model.named_modules():
            if isinstance(mod, (nn.Conv2d, nn.Linear)):
                nn.init.kaiming_uniform_(mod.weight, a=0.2, nonlinearity="leaky_relu", generator=gen)
                nn.init.zeros_(mod.bias)
                if name == "illumination.conv3":
                    frac = (GAMMA_INIT - GAMMA_MIN) / (GAMMA_MAX - GAMMA_MIN)
                    mod.bias.fill_(math.log(frac / (1 - frac)))
                if name.endswith(".head"):
                    if getattr(model, "cfg", None) is not None and model.cfg.zero_head:
                        mod.weight.zero_()
                    else:
                        mod.weight.mul_(1e-2)
            elif isinstance(mod, nn.LayerNorm):
                nn.init.ones_(mod.weight)
                nn.init.zeros_(mod.bias)
    return model


def build_model(cfg: NetConfig = NetConfig(), seg_backend: SegmentationBackend | None = None, seed: int = 0,
                sem_widths=None) -> Enhancer:
    if cfg.image_prior and sem_widths is None:
        if seg_backend is None:
            raise ValueError("image prior enabled: pass seg_backend or sem_widths")
        if seg_backend.num_scales != cfg.scales:
            raise ValueError(f"backend has {seg_backend.num_scales} scales, network expects {cfg.scales}")
        sem_widths = seg_backend.widths
    return init_parameters(Enhancer(cfg, sem_widths), seed)


def _to_batch(img, dtype):
    is_numpy = not isinstance(img, torch.Tensor)
    x = torch.as_tensor(np.asarray(img), dtype=dtype) if is_numpy else img
    single = x.ndim == 3
    return (x[None] if single else x), is_numpy, single


def _from_batch(x, is_numpy, single):
    if single:
        x = x[0]
    return x.detach().numpy() if is_numpy else x


def _batch_prior(prior: SemanticPrior, dtype, single: bool) -> SemanticPrior:
    feats = [f if isinstance(f, torch.Tensor) else torch.as_tensor(np.asarray(f), dtype=dtype) for f in prior.features]
    if single:
        feats = [f[None] for f in feats]
    return SemanticPrior(prior.seg_map, feats)


def refine_reflectance(model: Enhancer, refl, prior: SemanticPrior | None = None):
    dtype = next(model.parameters()).dtype
    x, is_numpy, single = _to_batch(refl, dtype)
    if prior is not None:
        prior = _batch_prior(prior, dtype, single)
    with torch.set_grad_enabled(not is_numpy):
        return _from_batch(model.refine(x, prior), is_numpy, single)


def adjust_illumination(model: Enhancer, illum):
    dtype = next(model.parameters()).dtype
    x, is_numpy, single = _to_batch(illum, dtype)
    with torch.set_grad_enabled(not is_numpy):
        return _from_batch(model.adjust_illumination(x), is_numpy, single)


def run_model(model: Enhancer, low: torch.Tensor, seg_backend: SegmentationBackend | None):
    """Forward a channel-last batch, extracting the semantic prior from ``low`` when needed."""
    prior = None
    if model.cfg.image_prior:
        if seg_backend is None:
            raise ValueError("this network uses the image prior; pass a segmentation backend")
        seg, feats = seg_backend(low.to(next(seg_backend.parameters()).dtype))
        prior = SemanticPrior(seg, [f.to(low.dtype) for f in feats])
    return model(low, prior)


def enhance(model: Enhancer, img, seg_backend: SegmentationBackend | None = None):
    """Enhance an (H, W, 3) image or (N, H, W, 3) batch; NumPy input gives NumPy output."""
    dtype = next(model.parameters()).dtype
    x, is_numpy, single = _to_batch(img, dtype)
    with torch.set_grad_enabled(not is_numpy):
        return _from_batch(run_model(model, x, seg_backend), is_numpy, single)


def pad_to_multiple(img: np.ndarray, multiple: int):
    """Edge-pad an (H, W, C) image so both sides are multiples of ``multiple``, centred.

    Returns the padded image and the ``(top, left)`` offsets needed to crop back.
    """
    h, w = img.shape[:2]
    ph, pw = (-h) % multiple, (-w) % multiple
    top, left = ph // 2, pw // 2
    padded = np.pad(img, ((top, ph - top), (left, pw - left), (0, 0)), mode="edge")
    return padded, (top, left)


def enhance_any_size(model: Enhancer, img: np.ndarray, seg_backend=None) -> np.ndarray:
    padded, (top, left) = pad_to_multiple(img, model.cfg.divisor)
    out = enhance(model, padded, seg_backend)
    return out[top:top + img.shape[0], left:left + img.shape[1]]


def count_parameters(params) -> int:
    """Total number of scalars in a module or a name -> array mapping."""
    if isinstance(params, nn.Module):
        return sum(p.numel() for p in params.parameters())
    return int(sum(np.prod(np.shape(v), dtype=np.int64) for v in params.values()))


def model_parameters(model: nn.Module) -> "OrderedDict[str, torch.Tensor]":
    """Named, ordered trainable arrays of ``model``."""
    return OrderedDict((n, p) for n, p in model.named_parameters())
