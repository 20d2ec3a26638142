"""Classical full-reference image metrics: MSE, PSNR, SSIM, GMSD.

All metrics operate on Rec.601 luminance in [0, 255]. Window parameters
follow the metrics' original publications and are exposed as keyword
arguments for reproducibility. Mismatched image sizes are an error, never
silently resampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.signal import correlate2d

from .errors import DecodeError, DimensionMismatch, TooSmall, ValidationFailure

__all__ = [
    "GrayImage",
    "MetricValue",
    "BUILTIN_METRICS",
    "to_gray",
    "gray_from_array",
    "mse",
    "psnr",
    "ssim",
    "gmsd",
    "PSNR_INF",
]

# Sentinel for PSNR of identical images; downstream rank statistics must
# order it above every finite value, not treat it as a magic number.
PSNR_INF = math.inf


@dataclass(frozen=True)
class GrayImage:
    """Row-major luminance plane with values in [0, 255]."""

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.shape != (self.height, self.width):
            raise ValidationFailure(
                f"data shape {data.shape} != (height={self.height}, width={self.width})"
            )
        if not np.isfinite(data).all():
            raise ValidationFailure("luminance values must be finite")
        if data.size and (data.min() < 0.0 or data.max() > 255.0):
            raise ValidationFailure("luminance values must lie in [0, 255]")
        object.__setattr__(self, "data", data)


@dataclass(frozen=True)
class MetricValue:
    metric: str
    value: float
    higher_is_better: bool


def gray_from_array(arr: np.ndarray) -> GrayImage:
    arr = np.asarray(arr, dtype=float)
    return GrayImage(width=arr.shape[1], height=arr.shape[0], data=arr)


def to_gray(path: str | Path) -> GrayImage:
    """Decode a PNG/JPEG file to luminance.

    RGB inputs use Rec.601 luma (0.299 R + 0.587 G + 0.114 B); single-channel
    inputs pass through unchanged; anything else (palette, alpha) is
    converted to RGB first.
    """
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode == "L":
                arr = np.asarray(img, dtype=float)
            else:
                if img.mode != "RGB":
                    img = img.convert("RGB")
                rgb = np.asarray(img, dtype=float)
                arr = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    except (OSError, UnidentifiedImageError) as exc:
        raise DecodeError(f"cannot decode image {str(path)!r}: {exc}") from exc
    return gray_from_array(arr)


def _check_same_size(a: GrayImage, b: GrayImage) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch(
            f"image sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def mse(a: GrayImage, b: GrayImage) -> MetricValue:
    """Mean squared pixel difference."""
    _check_same_size(a, b)
    d = a.data - b.data
    return MetricValue(metric="mse", value=float(np.mean(d * d)), higher_is_better=False)


def psnr(a: GrayImage, b: GrayImage) -> MetricValue:
    """Peak signal-to-noise ratio in dB; identical images yield +inf."""
    m = mse(a, b).value
    value = PSNR_INF if m == 0.0 else 10.0 * math.log10(255.0**2 / m)
    return MetricValue(metric="psnr", value=value, higher_is_better=True)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=float) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def ssim(
    a: GrayImage,
    b: GrayImage,
    *,
    window_size: int = 11,
    sigma: float = 1.5,
    c1: float = (0.01 * 255.0) ** 2,
    c2: float = (0.03 * 255.0) ** 2,
) -> MetricValue:
    """Mean of the local SSIM map over a Gaussian window (valid region only)."""
    _check_same_size(a, b)
    if a.width < window_size or a.height < window_size:
        raise TooSmall(
            f"images must be at least {window_size}x{window_size} for SSIM"
        )
    w = _gaussian_window(window_size, sigma)
    x = a.data
    y = b.data
    mu_x = correlate2d(x, w, mode="valid")
    mu_y = correlate2d(y, w, mode="valid")
    var_x = correlate2d(x * x, w, mode="valid") - mu_x * mu_x
    var_y = correlate2d(y * y, w, mode="valid") - mu_y * mu_y
    cov_xy = correlate2d(x * y, w, mode="valid") - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov_xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return MetricValue(metric="ssim", value=float(np.mean(num / den)), higher_is_better=True)


_PREWITT_X = np.array([[1.0, 0.0, -1.0]] * 3) / 3.0
_PREWITT_Y = _PREWITT_X.T


def _gradient_magnitude(x: np.ndarray) -> np.ndarray:
    gx = correlate2d(x, _PREWITT_X, mode="valid")
    gy = correlate2d(x, _PREWITT_Y, mode="valid")
    return np.sqrt(gx * gx + gy * gy)


def gmsd(a: GrayImage, b: GrayImage, *, c: float = 170.0) -> MetricValue:
    """Gradient-magnitude-similarity deviation.

    Prewitt gradients (1/3-normalized) over the valid interior, similarity
    stabilized by ``c``, deviation as the population standard deviation of
    the similarity map. Identical or flat inputs score exactly 0.
    """
    _check_same_size(a, b)
    if a.width < 3 or a.height < 3:
        raise TooSmall("images must be at least 3x3 for GMSD")
    ga = _gradient_magnitude(a.data)
    gb = _gradient_magnitude(b.data)
    gms = (2.0 * ga * gb + c) / (ga * ga + gb * gb + c)
    return MetricValue(metric="gmsd", value=float(np.std(gms)), higher_is_better=False)


BUILTIN_METRICS = {
    "mse": mse,
    "psnr": psnr,
    "ssim": ssim,
    "gmsd": gmsd,
}
