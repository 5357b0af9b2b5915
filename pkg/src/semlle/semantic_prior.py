"""Frozen segmentation backends producing image-level semantic priors.

A backend maps a channel-last RGB batch to per-pixel class probabilities and
one feature map per scale (scale ``b`` is downsampled by ``2**b``). Backends are
frozen: their weights never require grad, but gradients still flow through
them to the input image.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, NamedTuple, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

log = logging.getLogger(__name__)


class SemanticPrior(NamedTuple):
    seg_map: torch.Tensor | np.ndarray  # (..., H, W, K), sums to 1 over K
    features: List[torch.Tensor | np.ndarray]  # scale b: (..., H/2^b, W/2^b, C_b)


class SegmentationBackend(nn.Module):
    """Interface shared by toy and pretrained segmentation backends.

    Subclasses set ``num_classes``, ``num_scales`` and ``widths`` and implement
    ``forward(x)`` on an (N, H, W, 3) tensor, returning ``(seg_map, features)``
    in channel-last layout.
    """

    num_classes: int
    num_scales: int
    widths: tuple

    @property
    def frozen(self) -> bool:
        return not any(p.requires_grad for p in self.parameters())

    def freeze(self):
        for p in self.parameters():
            p.requires_grad_(False)
        return self.eval()

    def train(self, mode: bool = True):
        # Frozen backends stay in eval mode regardless of the caller.
        return super().train(False)

    @property
    def divisor(self) -> int:
        return 2 ** (self.num_scales - 1)

    def check_input(self, shape: Sequence[int]) -> None:
        h, w = shape[-3], shape[-2]
        if h % self.divisor or w % self.divisor:
            raise ValueError(
                f"image size {h}x{w} must be divisible by {self.divisor} (2**(num_scales-1))"
            )


def _init_conv(conv: nn.Conv2d, gen: torch.Generator) -> None:
    fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
    with torch.no_grad():
        conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * np.sqrt(2.0 / fan_in))
        conv.bias.copy_(torch.randn(conv.bias.shape, generator=gen) * 0.1)


class ToySegmentationBackend(SegmentationBackend):
    """Small fixed-weight convolutional pyramid with a softmax class head.

    Stands in for a pretrained segmentation network. Weights are drawn once from
    ``seed`` and frozen.
    """

    def __init__(self, seed: int = 0, num_classes: int = 21, num_scales: int = 3, widths=None):
        super().__init__()
        if num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {num_classes}")
        if num_scales < 1:
            raise ValueError(f"num_scales must be >= 1, got {num_scales}")
        if widths is None:
            widths = tuple(8 * 2**b for b in range(num_scales))
        if len(widths) != num_scales:
            raise ValueError(f"expected {num_scales} widths, got {len(widths)}")
        self.seed = seed
        self.num_classes = num_classes
        self.num_scales = num_scales
        self.widths = tuple(int(w) for w in widths)

        gen = torch.Generator().manual_seed(seed)
        stages = []
        in_ch = 3
        for b, w in enumerate(self.widths):
            conv = nn.Conv2d(in_ch, w, 3, stride=1 if b == 0 else 2, padding=1)
            _init_conv(conv, gen)
            stages.append(conv)
            in_ch = w
        self.stages = nn.ModuleList(stages)
        self.head_fine = nn.Conv2d(self.widths[0], num_classes, 1)
        self.head_coarse = nn.Conv2d(self.widths[-1], num_classes, 1)
        _init_conv(self.head_fine, gen)
        _init_conv(self.head_coarse, gen)
        self.freeze()

    def config(self) -> dict:
        return {"seed": self.seed, "num_classes": self.num_classes, "num_scales": self.num_scales}

    def forward(self, x: torch.Tensor):
        self.check_input(x.shape)
        h = x.permute(0, 3, 1, 2)
        feats = []
        for conv in self.stages:
            h = torch.tanh(conv(h))
            feats.append(h)
        logits = self.head_fine(feats[0])
        coarse = self.head_coarse(feats[-1])
        if coarse.shape[-2:] != logits.shape[-2:]:
            coarse = F.interpolate(coarse, size=logits.shape[-2:], mode="nearest")
        seg = torch.softmax(logits + coarse, dim=1)
        return seg.permute(0, 2, 3, 1), [f.permute(0, 2, 3, 1) for f in feats]


class TorchScriptSegmentationBackend(SegmentationBackend):
    """Adapter for an exported pretrained model (e.g. HRNet on ADE20K).

    The scripted module must take an (N, 3, H, W) tensor and return
    ``(logits, [features...])`` in channel-first layout.
    """

    def __init__(self, path, num_classes: int, num_scales: int, widths):
        super().__init__()
        self.model = torch.jit.load(str(path), map_location="cpu")
        self.num_classes = num_classes
        self.num_scales = num_scales
        self.widths = tuple(widths)
        self.freeze()

    def forward(self, x):
        self.check_input(x.shape)
        logits, feats = self.model(x.permute(0, 3, 1, 2))
        seg = torch.softmax(logits, dim=1)
        if seg.shape[-2:] != x.shape[1:3]:
            seg = F.interpolate(seg, size=x.shape[1:3], mode="bilinear", align_corners=False)
        return seg.permute(0, 2, 3, 1), [f.permute(0, 2, 3, 1) for f in feats[: self.num_scales]]


def make_toy_backend(seed: int = 0, num_classes: int = 21, num_scales: int = 3) -> ToySegmentationBackend:
    return ToySegmentationBackend(seed=seed, num_classes=num_classes, num_scales=num_scales)


def load_segmentation_backend(weights=None, *, seed=0, num_classes=21, num_scales=3, widths=None):
    """Load a pretrained backend from ``weights``, falling back to the toy backend.

    A missing weights file is logged as a warning, never raised.
    """
    if weights is not None:
        path = Path(weights)
        if path.is_file():
            if widths is None:
                raise ValueError("widths must be given for a pretrained backend")
            return TorchScriptSegmentationBackend(path, num_classes, num_scales, widths)
        log.warning("segmentation weights %s not found; using the toy backend", path)
    return make_toy_backend(seed=seed, num_classes=num_classes, num_scales=num_scales)


def extract_prior(backend: SegmentationBackend, img) -> SemanticPrior:
    """Run ``backend`` on a channel-last image (H, W, 3) or batch (N, H, W, 3).

    NumPy input gives NumPy output; tensors keep their autograd graph.
    """
    is_numpy = not isinstance(img, torch.Tensor)
    dtype = next(backend.parameters()).dtype
    x = torch.as_tensor(np.asarray(img), dtype=dtype) if is_numpy else img
    if x.shape[-1] != 3:
        raise ValueError(f"extract_prior expects 3 channels, got shape {tuple(x.shape)}")
    single = x.ndim == 3
    if single:
        x = x[None]
    backend.check_input(x.shape)
    seg, feats = backend(x)
    if single:
        seg, feats = seg[0], [f[0] for f in feats]
    if is_numpy:
        seg = seg.detach().numpy()
        feats = [f.detach().numpy() for f in feats]
    return SemanticPrior(seg, list(feats))
