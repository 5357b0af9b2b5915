"""Versioned checkpoint files.

The container is a safetensors file: a JSON header with every parameter's
name, shape and dtype followed by little-endian float32 data. The header
metadata holds one JSON entry with the format version, the :class:`NetConfig`,
the semantic widths and the segmentation backend settings, so a checkpoint is
enough to rebuild the enhancer.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch
from safetensors import safe_open
from safetensors.torch import save_file

from .network import Enhancer, NetConfig, init_parameters

FORMAT = "semlle-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    """Raised when a checkpoint is malformed or does not match its network."""


def save_checkpoint(path, model: Enhancer, backend_config: dict | None = None) -> None:
    tensors = {name: p.detach().to(torch.float32).contiguous() for name, p in model.named_parameters()}
    header = {
        "version": VERSION,
        "net": model.cfg.to_dict(),
        "sem_widths": list(model.sem_widths) if model.sem_widths else None,
        "segmentation": backend_config or {},
    }
    # a single sorted-JSON entry: safetensors writes several keys in hash order
    save_file(tensors, str(path), metadata={FORMAT: json.dumps(header, sort_keys=True)})


def read_checkpoint(path):
    """Return ``(tensors, metadata)`` without building a model; metadata is the decoded JSON entry."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such checkpoint: {path}")
    try:
        with safe_open(str(path), framework="pt") as fh:
            meta = fh.metadata() or {}
            tensors = {k: fh.get_tensor(k) for k in fh.keys()}
    except Exception as exc:  # safetensors raises its own error types
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc
    if FORMAT not in meta:
        raise CheckpointError(f"{path}: not a {FORMAT} file")
    meta = json.loads(meta[FORMAT])
    if meta.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    return tensors, meta


def load_checkpoint(path):
    """Rebuild the enhancer stored at ``path``.

    Every stored name and shape is checked against a freshly built network;
    mismatches raise :class:`CheckpointError` naming the offending entries.
    Returns ``(model, backend_config)``.
    """
    tensors, meta = read_checkpoint(path)
    cfg = NetConfig.from_dict(meta["net"])
    sem_widths = meta["sem_widths"]
    model = init_parameters(Enhancer(cfg, sem_widths), seed=0)
    expected = dict(model.named_parameters())
    missing = sorted(set(expected) - set(tensors))
    extra = sorted(set(tensors) - set(expected))
    if missing or extra:
        raise CheckpointError(f"{path}: parameter names differ (missing={missing}, unexpected={extra})")
    bad = [f"{n}: stored {tuple(tensors[n].shape)} vs expected {tuple(p.shape)}"
           for n, p in expected.items() if tuple(tensors[n].shape) != tuple(p.shape)]
    if bad:
        raise CheckpointError(f"{path}: shape mismatch for " + "; ".join(bad))
    with torch.no_grad():
        for name, p in expected.items():
            p.copy_(tensors[name])
    return model, meta["segmentation"]
