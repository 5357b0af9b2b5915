"""Image arrays, PNG/JPEG I/O, spatial gradients and PSNR/SSIM.

Images are channel-last float arrays (H, W, C) with C in {1, 3} and values in
[0, 1]. Most helpers also accept a leading batch axis and torch tensors, so
the same code path serves the metrics and the differentiable losses.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Union

import cv2
import numpy as np
import torch
from scipy.signal import convolve2d

ArrayLike = Union[np.ndarray, torch.Tensor]

# Returned by psnr() for identical inputs so tables always serialize.
PSNR_SENTINEL = 300.0

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_JPEG_MAGIC = b"\xff\xd8\xff"


class ImageFormatError(ValueError):
    """Raised for files that are not 8/16-bit PNG or JPEG."""


class DegenerateInputError(ValueError):
    """Raised when an image is too small for the requested operation."""


class GradientField(NamedTuple):
    dx: ArrayLike
    dy: ArrayLike


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float


def as_image(img, clip: bool = False) -> np.ndarray:
    """Validate ``img`` as an (H, W, C) float64 array, optionally clipping to [0, 1]."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3 or arr.shape[-1] not in (1, 3):
        raise ValueError(f"expected an (H, W, C) image with C in {{1, 3}}, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"image must be at least 1x1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    if clip:
        arr = np.clip(arr, 0.0, 1.0)
    return arr


def _sniff_format(path: Path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(_PNG_MAGIC):
        return "png"
    if head.startswith(_JPEG_MAGIC):
        return "jpeg"
    raise ImageFormatError(f"{path}: not a PNG or JPEG file")


def load_image(path) -> np.ndarray:
    """Read an 8- or 16-bit PNG/JPEG as an (H, W, C) float64 array in [0, 1].

    Integer codes are divided by the maximum code of the file's bit depth
    (255 or 65535). Grayscale files give C = 1; an alpha channel is dropped.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    _sniff_format(path)
    raw = cv2.imread(os.fspath(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageFormatError(f"{path}: could not decode image")
    if raw.dtype == np.uint8:
        max_code = 255.0
    elif raw.dtype == np.uint16:
        max_code = 65535.0
    else:
        raise ImageFormatError(f"{path}: unsupported sample type {raw.dtype}")
    if raw.ndim == 2:
        raw = raw[..., None]
    elif raw.shape[-1] == 4:
        raw = raw[..., :3]
    if raw.shape[-1] == 3:
        raw = raw[..., ::-1]  # BGR -> RGB
    elif raw.shape[-1] != 1:
        raise ImageFormatError(f"{path}: unsupported channel count {raw.shape[-1]}")
    return np.ascontiguousarray(raw, dtype=np.float64) / max_code


def to_uint8(img) -> np.ndarray:
    arr = as_image(img, clip=True)
    return np.round(arr * 255.0).astype(np.uint8)


def save_image(img, path) -> None:
    """Write ``img`` as an 8-bit PNG (values are clipped to [0, 1] and rounded)."""
    path = Path(path)
    codes = to_uint8(img)
    if codes.shape[-1] == 3:
        codes = codes[..., ::-1]
    if not path.parent.is_dir():
        raise OSError(f"cannot write {path}: parent directory does not exist")
    ok, buf = cv2.imencode(".png", codes)
    if not ok:
        raise OSError(f"PNG encoding failed for {path}")
    path.write_bytes(buf.tobytes())


def spatial_gradient(img: ArrayLike, method: str = "forward") -> GradientField:
    """Horizontal and vertical gradients of a channel-last image (or batch).

    ``method="forward"`` uses forward differences with replicate padding, so the
    last column of ``dx`` and the last row of ``dy`` are zero. ``method="sobel"``
    applies 3x3 Sobel kernels with edge replication instead.
    """
    if img.shape[-3] < 2 or img.shape[-2] < 2:
        raise DegenerateInputError(f"spatial_gradient needs H, W >= 2, got shape {tuple(img.shape)}")
    if method == "forward":
        dx = img * 0
        dy = img * 0
        dx[..., :, :-1, :] = img[..., :, 1:, :] - img[..., :, :-1, :]
        dy[..., :-1, :, :] = img[..., 1:, :, :] - img[..., :-1, :, :]
        return GradientField(dx, dy)
    if method == "sobel":
        return _sobel(img)
    raise ValueError(f"unknown gradient method {method!r}")


def _sobel(img: ArrayLike) -> GradientField:
    is_numpy = isinstance(img, np.ndarray)
    t = torch.as_tensor(img) if is_numpy else img
    squeeze = t.ndim == 3
    if squeeze:
        t = t[None]
    n, h, w, c = t.shape
    x = t.permute(0, 3, 1, 2).reshape(n * c, 1, h, w)
    x = torch.nn.functional.pad(x, (1, 1, 1, 1), mode="replicate")
    kx = torch.tensor([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]], dtype=t.dtype) / 8.0
    gx = torch.nn.functional.conv2d(x, kx.view(1, 1, 3, 3))
    gy = torch.nn.functional.conv2d(x, kx.t().reshape(1, 1, 3, 3))
    out = []
    for g in (gx, gy):
        g = g.reshape(n, c, h, w).permute(0, 2, 3, 1)
        if squeeze:
            g = g[0]
        out.append(g.numpy() if is_numpy else g)
    return GradientField(*out)


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for peak value 1.0.

    Identical inputs (and anything above the sentinel) return ``PSNR_SENTINEL``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_SENTINEL
    return min(10.0 * np.log10(1.0 / mse), PSNR_SENTINEL)


def to_luma(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[-1] == 3:
        return arr @ np.asarray(LUMA_WEIGHTS)
    if arr.ndim == 3 and arr.shape[-1] == 1:
        return arr[..., 0]
    if arr.ndim == 2:
        return arr
    raise ValueError(f"cannot convert shape {arr.shape} to luma")


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b) -> float:
    """Mean SSIM over all fully-contained 11x11 Gaussian windows.

    RGB inputs are reduced to luma (0.299, 0.587, 0.114) first; the dynamic
    range is 1.0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    x, y = to_luma(a), to_luma(b)
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise DegenerateInputError(
            f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape[0]}x{x.shape[1]}"
        )
    win = gaussian_window()

    def filt(z):
        return convolve2d(z, win, mode="valid")

    mu_x, mu_y = filt(x), filt(y)
    var_x = filt(x * x) - mu_x**2
    var_y = filt(y * y) - mu_y**2
    cov = filt(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_x**2 + mu_y**2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.mean(num / den))


def evaluate_pair(out, gt) -> MetricReport:
    return MetricReport(psnr=psnr(out, gt), ssim=ssim(out, gt))
