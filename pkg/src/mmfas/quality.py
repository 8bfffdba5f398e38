"""Surveillance-style degradation (bilinear downsampling + Gaussian blur) and PSNR/SSIM."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

SSIM_WINDOW = 8
SSIM_C1 = (0.01 * 255) ** 2
SSIM_C2 = (0.03 * 255) ** 2


@dataclass(frozen=True)
class DegradeSpec:
    target_resolution: int
    blur_enabled: bool = True
    kernel_size: int = 3
    sigma: float = 1.5
    blur_first: bool = False  # default order: resize, then blur

    def __post_init__(self):
        if self.target_resolution < 1:
            raise ValueError("target_resolution must be >= 1")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 1, got {self.kernel_size}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class QualityScore:
    psnr_db: float
    ssim: float

    def __str__(self) -> str:
        return f"psnr={self.psnr_db:.4f} ssim={self.ssim:.4f}"


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Normalized ``size x size`` isotropic Gaussian sampled at integer offsets."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    offsets = np.arange(size, dtype=np.float64) - size // 2
    g = np.exp(-(offsets**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _planes(image: np.ndarray):
    """Yield (index, 2-D plane) for grayscale or HxWxC images."""
    if image.ndim == 2:
        yield (Ellipsis,), image
    else:
        for c in range(image.shape[2]):
            yield (Ellipsis, c), image[:, :, c]


def _triangle_weights(n_in: int, n_out: int) -> np.ndarray:
    """``(n_out, n_in)`` bilinear resampling matrix with half-pixel centres.

    When shrinking, the triangle widens by the scale factor so every source
    pixel under the output footprint contributes (antialiased bilinear, the
    PIL / ``antialias=True`` convention). When enlarging it is plain bilinear
    with edge clamping.
    """
    scale = n_in / n_out
    support = max(scale, 1.0)
    centres = (np.arange(n_out) + 0.5) * scale
    src = np.arange(n_in) + 0.5
    w = np.maximum(0.0, 1.0 - np.abs(src[None, :] - centres[:, None]) / support)
    return w / w.sum(axis=1, keepdims=True)


def resize_bilinear(image, size: tuple[int, int]) -> np.ndarray:
    """Separable (antialiased when shrinking) bilinear resize; returns float64."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    out_h, out_w = size
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be positive, got {size}")
    wy, wx = _triangle_weights(h, out_h), _triangle_weights(w, out_w)
    out = np.empty((out_h, out_w) + image.shape[2:], dtype=np.float64)
    for idx, plane in _planes(image):
        out[idx] = wy @ plane @ wx.T
    return out


def blur(image, kernel_size: int = 3, sigma: float = 1.5) -> np.ndarray:
    """Gaussian blur with edge-replicate padding; returns float64."""
    image = np.asarray(image, dtype=np.float64)
    kernel = gaussian_kernel(kernel_size, sigma)
    out = np.empty_like(image)
    for idx, plane in _planes(image):
        out[idx] = ndimage.correlate(plane, kernel, mode="nearest")
    return out


def to_uint8(image) -> np.ndarray:
    return np.clip(np.floor(np.asarray(image, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def degrade(image, spec: DegradeSpec) -> np.ndarray:
    """Resize to ``spec.target_resolution`` squared, optionally blur, and requantize."""
    image = np.asarray(image)
    if image.size == 0 or image.ndim not in (2, 3):
        raise ValueError(f"expected a non-empty 2-D or HxWxC image, got shape {image.shape}")
    r = spec.target_resolution
    out = image
    if spec.blur_enabled and spec.blur_first:
        out = blur(out, spec.kernel_size, spec.sigma)
    out = resize_bilinear(out, (r, r))
    if spec.blur_enabled and not spec.blur_first:
        out = blur(out, spec.kernel_size, spec.sigma)
    return to_uint8(out)


def _check_pair(reference, test):
    reference = np.asarray(reference, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if reference.shape != test.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {test.shape}")
    return reference, test


def psnr(reference, test) -> float:
    reference, test = _check_pair(reference, test)
    mse = np.mean((reference - test) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(255.0**2 / mse))


def _ssim_plane(a: np.ndarray, b: np.ndarray) -> float:
    win = (SSIM_WINDOW, SSIM_WINDOW)
    wa = np.lib.stride_tricks.sliding_window_view(a, win)
    wb = np.lib.stride_tricks.sliding_window_view(b, win)
    mu_a = wa.mean(axis=(-1, -2))
    mu_b = wb.mean(axis=(-1, -2))
    da = wa - mu_a[..., None, None]
    db = wb - mu_b[..., None, None]
    var_a = (da**2).mean(axis=(-1, -2))
    var_b = (db**2).mean(axis=(-1, -2))
    cov = (da * db).mean(axis=(-1, -2))
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


def ssim(reference, test) -> float:
    """Mean SSIM over all 8x8 windows (uniform weights, population statistics).

    Multi-channel images are scored per channel and averaged.
    """
    reference, test = _check_pair(reference, test)
    if reference.ndim < 2 or reference.shape[0] < SSIM_WINDOW or reference.shape[1] < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {reference.shape}")
    scores = [_ssim_plane(pa, test[idx]) for idx, pa in _planes(reference)]
    return float(np.mean(scores))


def quality(reference, test) -> QualityScore:
    return QualityScore(psnr(reference, test), ssim(reference, test))


def degradation_quality(reference, spec: DegradeSpec) -> QualityScore:
    """Degrade ``reference``, upsample it back bilinearly and score against the original."""
    reference = np.asarray(reference)
    low = degrade(reference, spec)
    restored = to_uint8(resize_bilinear(low, reference.shape[:2]))
    return quality(reference, restored)
