"""Vision-language backends, cosine similarity and the prompt-contrast loss."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

log = logging.getLogger(__name__)

EMBED_DIM = 512


@dataclass(frozen=True)
class PromptPair:
    low_prompt: str = "low-light image"
    high_prompt: str = "high-light image"

    def __post_init__(self):
        if not self.low_prompt or not self.high_prompt:
            raise ValueError("prompts must be non-empty strings")


class VisionLanguageBackend(nn.Module):
    """Interface for frozen joint text/image encoders.

    ``embed_text`` returns a unit (D,) tensor; ``embed_image`` maps an
    (N, H, W, 3) batch to unit (N, D) embeddings and is differentiable with
    respect to the image.
    """

    embed_dim: int
    min_size: int = 1

    @property
    def frozen(self) -> bool:
        return not any(p.requires_grad for p in self.parameters())

    def freeze(self):
        for p in self.parameters():
            p.requires_grad_(False)
        return self.eval()

    def train(self, mode: bool = True):
        return super().train(False)


def _prompt_seed(prompt: str) -> int:
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


class ToyVisionLanguageBackend(VisionLanguageBackend):
    """Deterministic stand-in for a CLIP-style model.

    Text embeddings are unit Gaussian vectors seeded by a hash of the prompt.
    Images go through two strided convolutions, mean/std pooling and a linear
    map to D dimensions, all with seeded frozen weights.
    """

    min_size = 8

    def __init__(self, seed: int = 0, embed_dim: int = EMBED_DIM, width: int = 16):
        super().__init__()
        self.seed = seed
        self.embed_dim = embed_dim
        gen = torch.Generator().manual_seed(seed)
        self.conv1 = nn.Conv2d(3, width, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(width, 2 * width, 3, stride=2, padding=1)
        self.proj = nn.Linear(4 * width, embed_dim)
        with torch.no_grad():
            for layer in (self.conv1, self.conv2, self.proj):
                fan_in = layer.weight[0].numel()
                layer.weight.copy_(torch.randn(layer.weight.shape, generator=gen) / np.sqrt(fan_in))
                layer.bias.copy_(torch.randn(layer.bias.shape, generator=gen) * 0.1)
        self.freeze()

    def embed_text(self, prompt: str) -> torch.Tensor:
        if not prompt:
            raise ValueError("prompt must be a non-empty string")
        gen = torch.Generator().manual_seed(_prompt_seed(prompt))
        v = torch.randn(self.embed_dim, generator=gen, dtype=torch.float64)
        return (v / v.norm()).to(self.proj.weight.dtype)

    def embed_image(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-3] < self.min_size or x.shape[-2] < self.min_size:
            raise ValueError(
                f"image {x.shape[-3]}x{x.shape[-2]} is smaller than the backend minimum {self.min_size}"
            )
        h = x.permute(0, 3, 1, 2)
        h = F.gelu(self.conv1(h))
        h = F.gelu(self.conv2(h))
        flat = h.flatten(2)
        pooled = torch.cat([flat.mean(-1), (flat.var(-1, unbiased=False) + 1e-6).sqrt()], dim=-1)
        return F.normalize(self.proj(pooled), dim=-1, eps=1e-12)


class TorchScriptVisionLanguageBackend(VisionLanguageBackend):
    """Adapter for exported encoders.

    ``text_model`` takes a prompt string and ``image_model`` an (N, 3, H, W)
    tensor; tokenization is the exported model's business.
    """

    def __init__(self, image_path, text_path, embed_dim: int = EMBED_DIM, min_size: int = 224):
        super().__init__()
        self.image_model = torch.jit.load(str(image_path), map_location="cpu")
        self.text_model = torch.jit.load(str(text_path), map_location="cpu")
        self.embed_dim = embed_dim
        self.min_size = min_size
        self.freeze()

    def embed_text(self, prompt):
        if not prompt:
            raise ValueError("prompt must be a non-empty string")
        return F.normalize(self.text_model(prompt).reshape(-1), dim=0)

    def embed_image(self, x):
        if x.shape[-3] < self.min_size or x.shape[-2] < self.min_size:
            raise ValueError(f"image is smaller than the backend minimum {self.min_size}")
        return F.normalize(self.image_model(x.permute(0, 3, 1, 2)), dim=-1)


def load_vl_backend(image_weights=None, text_weights=None, *, seed=0, embed_dim=EMBED_DIM):
    """Pretrained encoders when both files exist, otherwise the toy backend (with a warning)."""
    if image_weights is not None or text_weights is not None:
        paths = [Path(p) for p in (image_weights, text_weights) if p is not None]
        if len(paths) == 2 and all(p.is_file() for p in paths):
            return TorchScriptVisionLanguageBackend(paths[0], paths[1], embed_dim)
        log.warning("vision-language weights %s not usable; using the toy backend", paths)
    return ToyVisionLanguageBackend(seed=seed, embed_dim=embed_dim)


def embed_text(backend: VisionLanguageBackend, prompt: str) -> torch.Tensor:
    return backend.embed_text(prompt)


def embed_image(backend: VisionLanguageBackend, img) -> torch.Tensor:
    """Embed an (H, W, 3) image as a (D,) vector, or an (N, H, W, 3) batch as (N, D)."""
    dtype = next(backend.parameters()).dtype
    x = img.to(dtype) if isinstance(img, torch.Tensor) else torch.as_tensor(np.asarray(img), dtype=dtype)
    if x.ndim == 3:
        return backend.embed_image(x[None])[0]
    return backend.embed_image(x)


def cosine_similarity(a, b):
    """Cosine of the angle between ``a`` and ``b`` along the last axis."""
    if isinstance(a, torch.Tensor) or isinstance(b, torch.Tensor):
        a = torch.as_tensor(a)
        b = torch.as_tensor(b, dtype=a.dtype)
        na, nb = a.norm(dim=-1), b.norm(dim=-1)
        if bool((na == 0).any()) or bool((nb == 0).any()):
            raise ValueError("cosine similarity of a zero vector is undefined")
        return (a * b).sum(-1) / (na * nb)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    na, nb = np.linalg.norm(a, axis=-1), np.linalg.norm(b, axis=-1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ValueError("cosine similarity of a zero vector is undefined")
    return np.clip((a * b).sum(-1) / (na * nb), -1.0, 1.0)


def contrast_from_embeddings(image_emb, low_emb, high_emb):
    """cos(image, low) - cos(image, high), averaged over a leading batch axis if present."""
    value = cosine_similarity(image_emb, low_emb) - cosine_similarity(image_emb, high_emb)
    return value.mean() if getattr(value, "ndim", 0) else value


def multimodal_loss(backend: VisionLanguageBackend, enhanced, prompts: PromptPair = PromptPair()):
    """Pull the enhanced image toward the high-light prompt and away from the low-light one.

    Returns a value in [-2, 2]; a scalar tensor for tensor input, a float otherwise.
    """
    img_emb = embed_image(backend, enhanced)
    low = backend.embed_text(prompts.low_prompt).to(img_emb.dtype)
    high = backend.embed_text(prompts.high_prompt).to(img_emb.dtype)
    value = contrast_from_embeddings(img_emb, low, high)
    return value if isinstance(enhanced, torch.Tensor) else float(value)
