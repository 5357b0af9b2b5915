"""Semantic-aware embedding: cross-attention from semantic to reflectance features.

Features are channel-last, so every 1x1 convolution is an ``nn.Linear`` over
the last axis. For flattened positions ``p`` (reflectance) and ``q``
(semantic)::

    scores[p, q] = <W_k r_p, W_q s_q> / sqrt(C)     (row softmax over q)
    out          = FN(A @ W_v r + r)
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


class FeedForward(nn.Module):
    def __init__(self, channels: int, expansion: int = 2):
        super().__init__()
        self.fc1 = nn.Linear(channels, channels * expansion)
        self.fc2 = nn.Linear(channels * expansion, channels)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


class SemanticEmbedding(nn.Module):
    """Parameters and forward pass of one SEM block.

    Args:
        channels: reflectance feature width C.
        sem_channels: width of the incoming semantic features; a 1x1 projection
            to C is added when it differs.
        layer_norm: normalize both branches before the projections.
        feedforward: use the two-layer FN; ``False`` makes FN the identity
            (only useful for hand-checked test configurations).
    """

    def __init__(self, channels: int, sem_channels: int | None = None, *, layer_norm: bool = True,
                 feedforward: bool = True, expansion: int = 2):
        super().__init__()
        self.channels = channels
        sem_channels = channels if sem_channels is None else sem_channels
        self.sem_proj = nn.Linear(sem_channels, channels) if sem_channels != channels else None
        self.norm_refl = nn.LayerNorm(channels) if layer_norm else None
        self.norm_sem = nn.LayerNorm(channels) if layer_norm else None
        self.key = nn.Linear(channels, channels)
        self.query = nn.Linear(channels, channels)
        self.value = nn.Linear(channels, channels)
        self.ffn = FeedForward(channels, expansion) if feedforward else nn.Identity()

    def correlation(self, refl: torch.Tensor, sem: torch.Tensor) -> torch.Tensor:
        """Attention map for already-normalized (..., P, C) inputs."""
        k = self.key(refl)
        q = self.query(sem)
        scores = k @ q.transpose(-1, -2) / math.sqrt(self.channels)
        return torch.softmax(scores, dim=-1)

    def forward(self, refl: torch.Tensor, sem: torch.Tensor) -> torch.Tensor:
        if self.sem_proj is not None:
            sem = self.sem_proj(sem)
        if refl.shape != sem.shape:
            raise ValueError(f"SEM shape mismatch: reflectance {tuple(refl.shape)} vs semantic {tuple(sem.shape)}")
        if refl.shape[-1] != self.channels:
            raise ValueError(f"SEM expects {self.channels} channels, got {refl.shape[-1]}")
        shape = refl.shape
        r = refl.reshape(*shape[:-3], shape[-3] * shape[-2], shape[-1])
        s = sem.reshape(r.shape)
        rn = self.norm_refl(r) if self.norm_refl is not None else r
        sn = self.norm_sem(s) if self.norm_sem is not None else s
        attn = self.correlation(rn, sn)
        out = attn @ self.value(rn) + r
        return self.ffn(out).reshape(shape)


def _flatten_positions(x):
    # (h, w, C) -> (h*w, C); (P, C) passes through.
    if x.ndim >= 3:
        return x.reshape(*x.shape[:-3], x.shape[-3] * x.shape[-2], x.shape[-1])
    return x


def correlation_map(params: SemanticEmbedding, refl, sem):
    """Row-stochastic (h*w, h*w) correlation between normalized feature maps."""
    if tuple(refl.shape) != tuple(sem.shape):
        raise ValueError(f"correlation_map shape mismatch: {tuple(refl.shape)} vs {tuple(sem.shape)}")
    is_numpy = not isinstance(refl, torch.Tensor)
    dtype = params.key.weight.dtype
    r = torch.tensor(np.asarray(refl), dtype=dtype) if is_numpy else refl
    s = torch.tensor(np.asarray(sem), dtype=dtype) if is_numpy else sem
    attn = params.correlation(_flatten_positions(r), _flatten_positions(s))
    return attn.detach().numpy() if is_numpy else attn


def sem_forward(params: SemanticEmbedding, refl, sem):
    """Apply the SEM block to (h, w, C) feature maps; NumPy in, NumPy out."""
    is_numpy = not isinstance(refl, torch.Tensor)
    dtype = params.key.weight.dtype
    r = torch.tensor(np.asarray(refl), dtype=dtype) if is_numpy else refl
    s = torch.tensor(np.asarray(sem), dtype=dtype) if is_numpy else sem
    out = params(r, s)
    return out.detach().numpy() if is_numpy else out
