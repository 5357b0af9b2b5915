"""Closed-form Retinex split of an RGB image into illumination and reflectance.

Illumination is the per-pixel channel maximum; reflectance is the image divided
by that maximum (guarded by ``EPS`` so black pixels stay well defined).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import torch

EPS = 1e-4


class RetinexPair(NamedTuple):
    illumination: np.ndarray | torch.Tensor  # (..., H, W, 1)
    reflectance: np.ndarray | torch.Tensor  # (..., H, W, 3)


def decompose(img) -> RetinexPair:
    """Split a channel-last RGB image (or batch) into a :class:`RetinexPair`."""
    if img.shape[-1] != 3:
        raise ValueError(f"decompose expects 3 channels, got shape {tuple(img.shape)}")
    if isinstance(img, torch.Tensor):
        illum = img.amax(dim=-1, keepdim=True)
    else:
        img = np.asarray(img, dtype=np.float64)
        illum = img.max(axis=-1, keepdims=True)
    refl = img / (illum + EPS)
    return RetinexPair(illum, refl)


def recompose(pair: RetinexPair):
    """Multiply illumination back into reflectance and clip to [0, 1]."""
    illum, refl = pair
    if illum.shape[-1] != 1 or tuple(illum.shape[:-1]) != tuple(refl.shape[:-1]):
        raise ValueError(
            f"illumination {tuple(illum.shape)} does not broadcast over reflectance {tuple(refl.shape)}"
        )
    out = illum * refl
    if isinstance(out, torch.Tensor):
        return out.clamp(0.0, 1.0)
    return np.clip(out, 0.0, 1.0)
