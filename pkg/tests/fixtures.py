"""Deterministic image fixtures shared by the quality tests and the acceptance suite."""

import numpy as np

from mmfas.quality import to_uint8


def face_texture(seed: int, n: int = 112) -> np.ndarray:
    """Grayscale face-like image: shaded ellipse, dark eyes/mouth, mild 1/f texture."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:n, 0:n] / (n - 1) * 2 - 1
    cx, cy = rng.uniform(-0.1, 0.1, 2)
    ax, ay = rng.uniform(0.55, 0.7), rng.uniform(0.7, 0.85)
    d = ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2
    background = 40 + 60 * (xx + 1) / 2 * rng.uniform(0.5, 1)
    img = np.where(d < 1, 150 + 60 * np.sqrt(np.clip(1 - d, 0, 1)), background)
    for ex in (-0.25, 0.25):
        img -= 70 * np.exp(-(((xx - cx - ex * ax * 1.3) / 0.08) ** 2 + ((yy - cy + 0.2) / 0.05) ** 2))
    img -= 60 * np.exp(-(((xx - cx) / 0.2) ** 2 + ((yy - cy - 0.45) / 0.04) ** 2))
    f = np.fft.fftfreq(n)
    fx, fy = np.meshgrid(f, f)
    amp = 1 / np.maximum(np.hypot(fx, fy), 1 / n)
    tex = np.real(np.fft.ifft2(amp * np.exp(2j * np.pi * rng.random((n, n)))))
    return to_uint8(img + 8 * tex / tex.std())
