"""Paired low/normal-light datasets and the procedurally generated overfit suite."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imaging import load_image, save_image

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
OVERFIT_SUITE = Path(__file__).parent / "assets" / "overfit"


class DatasetError(ValueError):
    """Raised when a dataset directory cannot be paired up."""


class PairMismatchError(DatasetError):
    """Raised when a low/high pair does not share the same height and width."""

    def __init__(self, name, low_shape, high_shape):
        super().__init__(f"pair {name!r}: low image is {low_shape[0]}x{low_shape[1]} "
                         f"but high image is {high_shape[0]}x{high_shape[1]}")
        self.name = name


@dataclass
class PairedDataset:
    """Ordered (low, high) image paths with an optional square crop size."""

    pairs: list
    patch: int | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.pairs:
            raise DatasetError("dataset is empty")

    def __len__(self):
        return len(self.pairs)

    @property
    def names(self):
        return [Path(low).stem for low, _ in self.pairs]

    def load(self, i: int):
        if i not in self._cache:
            low_path, high_path = self.pairs[i]
            low, high = load_image(low_path), load_image(high_path)
            if low.shape[:2] != high.shape[:2]:
                raise PairMismatchError(Path(low_path).stem, low.shape, high.shape)
            if self.patch is not None and min(low.shape[:2]) < self.patch:
                raise DatasetError(f"pair {Path(low_path).stem!r} is smaller than the {self.patch}px patch")
            self._cache[i] = (low, high)
        return self._cache[i]

    def batch(self, indices, rng: np.random.Generator | None = None, flip: bool = True):
        """Stack the pairs at ``indices`` into (N, h, w, 3) float32 arrays.

        With a patch size and ``rng``, each pair gets a random crop and, if
        ``flip``, a coin-flip horizontal mirror; otherwise images are used whole
        (top-left cropped to the patch size when one is set).
        """
        lows, highs = [], []
        for i in indices:
            low, high = self.load(i)
            if self.patch is not None:
                p = self.patch
                if rng is not None:
                    top = int(rng.integers(0, low.shape[0] - p + 1))
                    left = int(rng.integers(0, low.shape[1] - p + 1))
                else:
                    top = left = 0
                low, high = low[top:top + p, left:left + p], high[top:top + p, left:left + p]
            if rng is not None and flip and rng.random() < 0.5:
                low, high = low[:, ::-1], high[:, ::-1]
            lows.append(low)
            highs.append(high)
        return np.stack(lows).astype(np.float32), np.stack(highs).astype(np.float32)


def _image_files(directory: Path) -> dict:
    return {p.stem: p for p in sorted(directory.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def load_dataset(root, patch: int | None = None) -> PairedDataset:
    """Pair ``root/low/*`` with ``root/high/*`` by file stem.

    Unmatched files are skipped with a warning. Every pair is loaded once to
    check that both images share the same size.
    """
    root = Path(root)
    low_dir, high_dir = root / "low", root / "high"
    for d in (low_dir, high_dir):
        if not d.is_dir():
            raise DatasetError(f"missing directory {d}")
    lows, highs = _image_files(low_dir), _image_files(high_dir)
    common = sorted(set(lows) & set(highs))
    if not common:
        raise DatasetError(f"no matching pairs under {root}: low/ has {sorted(lows)}, high/ has {sorted(highs)}")
    unmatched = sorted(set(lows) ^ set(highs))
    if unmatched:
        warnings.warn(f"skipping unmatched files under {root}: {unmatched}", stacklevel=2)
    ds = PairedDataset([(lows[k], highs[k]) for k in common], patch)
    for i in range(len(ds)):
        ds.load(i)
    return ds


def _pattern(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.empty((size, size, 3))
    for c in range(3):
        fx, fy, phase = rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0), rng.uniform(0, 2 * np.pi)
        img[..., c] = 0.5 + 0.25 * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
    for _ in range(3):
        color = rng.uniform(0.1, 0.95, size=3)
        cy, cx = rng.uniform(0.2, 0.8, size=2)
        r = rng.uniform(0.1, 0.25)
        if rng.random() < 0.5:
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r**2
        else:
            mask = (np.abs(yy - cy) < r) & (np.abs(xx - cx) < r)
        img[mask] = color
    return np.clip(img, 0.02, 0.98)


def make_synthetic_pairs(n: int = 4, size: int = 32, seed: int = 0, gamma: float = 1.8,
                         gain: float = 0.35, noise: float = 0.01):
    """Colourful patterns and their darkened, noisy counterparts.

    The low-light version is ``gain * high**gamma`` plus Gaussian noise, clipped
    to [0, 1]. Returns a list of ``(low, high)`` float arrays.
    """
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        high = _pattern(rng, size)
        low = np.clip(gain * high**gamma + rng.normal(0.0, noise, high.shape), 0.0, 1.0)
        pairs.append((low, high))
    return pairs


def write_synthetic_suite(root, n: int = 4, size: int = 32, seed: int = 0) -> Path:
    root = Path(root)
    (root / "low").mkdir(parents=True, exist_ok=True)
    (root / "high").mkdir(parents=True, exist_ok=True)
    for i, (low, high) in enumerate(make_synthetic_pairs(n, size, seed)):
        save_image(low, root / "low" / f"pair_{i:02d}.png")
        save_image(high, root / "high" / f"pair_{i:02d}.png")
    return root


def overfit_suite(patch: int | None = None) -> PairedDataset:
    """The four 32x32 training pairs shipped with the package."""
    return load_dataset(OVERFIT_SUITE / "train", patch)


def overfit_holdout() -> PairedDataset:
    """Two extra pairs drawn from the same generator with a different seed."""
    return load_dataset(OVERFIT_SUITE / "holdout")
