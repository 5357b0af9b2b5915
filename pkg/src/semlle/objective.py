"""Pixel, edge, semantic-KL and multimodal losses and their weighted sum.

Every loss accepts channel-last images (optionally batched). Tensors keep
their graph; NumPy inputs return Python floats.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
import torch

from .imaging import spatial_gradient
from .text_prior import PromptPair, multimodal_loss

KL_FLOOR = 1e-8
LOSS_NAMES = ("pix", "edge", "sem", "mul")


@dataclass(frozen=True)
class LossWeights:
    pix: float = 1.0
    edge: float = 0.1
    sem: float = 0.1
    mul: float = 0.01

    def __post_init__(self):
        vals = [getattr(self, f.name) for f in fields(self)]
        if any(v < 0 for v in vals):
            raise ValueError(f"loss weights must be non-negative, got {vals}")
        if not any(v > 0 for v in vals):
            raise ValueError("at least one loss weight must be positive")


@dataclass(frozen=True)
class LossSwitches:
    pix: bool = True
    edge: bool = True
    sem: bool = True
    mul: bool = True


@dataclass
class LossBreakdown:
    pix: torch.Tensor
    edge: torch.Tensor
    sem: torch.Tensor
    mul: torch.Tensor
    total: torch.Tensor

    def to_dict(self) -> dict:
        return {f.name: float(getattr(self, f.name).detach()) for f in fields(self)}


def _pair(a, b, name):
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"{name}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    if isinstance(a, torch.Tensor) or isinstance(b, torch.Tensor):
        a = torch.as_tensor(a)
        return a, torch.as_tensor(b, dtype=a.dtype), False
    return torch.as_tensor(np.asarray(a, dtype=np.float64)), torch.as_tensor(np.asarray(b, dtype=np.float64)), True


def _ret(value: torch.Tensor, as_float: bool):
    return float(value) if as_float else value


def pixel_loss(out, gt):
    """Mean squared error over every pixel and channel."""
    out, gt, as_float = _pair(out, gt, "pixel_loss")
    return _ret(((out - gt) ** 2).mean(), as_float)


def edge_loss(out, gt, method: str = "forward"):
    """Mean squared difference of the pooled (dx, dy) gradient fields."""
    out, gt, as_float = _pair(out, gt, "edge_loss")
    go, gg = spatial_gradient(out, method), spatial_gradient(gt, method)
    sq = ((go.dx - gg.dx) ** 2).sum() + ((go.dy - gg.dy) ** 2).sum()
    return _ret(sq / (2 * out.numel()), as_float)


def semantic_loss(seg_out, seg_gt):
    """Pixel-mean KL(seg_out || seg_gt) in nats, class axis last."""
    p, q, as_float = _pair(seg_out, seg_gt, "semantic_loss")
    p = p.clamp_min(KL_FLOOR)
    q = q.clamp_min(KL_FLOOR)
    kl = (p * (p.log() - q.log())).sum(-1)
    return _ret(kl.mean(), as_float)


def total_loss(out, gt, seg_out=None, seg_gt=None, vl_backend=None, prompts: PromptPair = PromptPair(),
               weights: LossWeights = LossWeights(), switches: LossSwitches = LossSwitches(),
               edge_method: str = "forward") -> LossBreakdown:
    """Weighted sum of the enabled sub-losses.

    Disabled terms are not evaluated and are reported as exactly zero. The
    semantic term needs both segmentation maps and the multimodal term needs a
    vision-language backend.
    """
    out, gt, _ = _pair(out, gt, "total_loss")
    zero = out.new_zeros(())
    parts = {}
    parts["pix"] = pixel_loss(out, gt) if switches.pix else zero
    parts["edge"] = edge_loss(out, gt, edge_method) if switches.edge else zero
    if switches.sem:
        if seg_out is None or seg_gt is None:
            raise ValueError("semantic loss enabled but segmentation maps are missing")
        parts["sem"] = semantic_loss(torch.as_tensor(seg_out, dtype=out.dtype), torch.as_tensor(seg_gt, dtype=out.dtype))
    else:
        parts["sem"] = zero
    if switches.mul:
        if vl_backend is None:
            raise ValueError("multimodal loss enabled but no vision-language backend was given")
        parts["mul"] = multimodal_loss(vl_backend, out, prompts)
    else:
        parts["mul"] = zero
    total = zero
    for name in LOSS_NAMES:
        if getattr(switches, name):
            total = total + getattr(weights, name) * parts[name]
    return LossBreakdown(total=total, **parts)
