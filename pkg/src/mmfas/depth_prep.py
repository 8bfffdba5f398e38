"""Depth/IR preparation: portrait-box expansion, hole filling and 24-bit to 8-bit mapping.

Raw depth is in millimetres with ``0`` marking a hole. Two depth normalizers
are provided. Both fill holes inside the expanded portrait box with the mean
face depth and then map a depth window linearly onto ``[0, 255]``:

* ``normalize_depth_alg1`` uses the observed face range ``[min, max]``;
* ``normalize_depth_alg2`` uses a fixed ``mean +/- 50`` mm window.

Values outside the window saturate, which gives fine quantization steps on
the face and coarse (saturating) steps in the background.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_RAW_24BIT = 2**24 - 1
PORTRAIT_FACTOR = 1.3
ALG2_HALF_WINDOW_MM = 50


class EmptyFaceDepthError(ValueError):
    """Every depth pixel inside the face box is a hole; the frame must be rejected."""


class AlignmentError(ValueError):
    """Modalities passed together do not share the same image dimensions."""


@dataclass(frozen=True)
class FaceBox:
    """Axis-aligned box in pixel coordinates (top-left corner plus extents)."""

    x: int
    y: int
    w: int
    h: int

    @classmethod
    def parse(cls, text: str) -> "FaceBox":
        """Parse ``"x,y,w,h"``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"expected x,y,w,h, got {text!r}")
        return cls(*(int(p) for p in parts))

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)


@dataclass(frozen=True)
class DepthStats:
    mean: float
    minimum: float
    maximum: float


def round_half_up(values):
    """Round to the nearest integer with ties going up (``floor(v + 0.5)``)."""
    return np.floor(np.asarray(values, dtype=np.float64) + 0.5)


def _check_inside(box: FaceBox, image_dims: tuple[int, int]) -> None:
    height, width = image_dims
    if box.w <= 0 or box.h <= 0:
        raise ValueError(f"degenerate box {box}")
    if box.x < 0 or box.y < 0 or box.x + box.w > width or box.y + box.h > height:
        raise ValueError(f"box {box} does not lie inside image of size {height}x{width}")


def expand_bbox(box: FaceBox, factor: float, image_dims: tuple[int, int]) -> FaceBox:
    """Scale ``box`` about its centre by ``factor`` and clip it to the image.

    ``image_dims`` is ``(height, width)``. The corner offset is rounded
    half-up independently of the box position, so the result commutes with
    integer translations of the input (before clipping).
    """
    if not factor > 0 or not math.isfinite(factor):
        raise ValueError(f"factor must be positive, got {factor}")
    if factor < 1.0:
        raise ValueError(f"factor must be >= 1.0, got {factor}")
    _check_inside(box, image_dims)
    height, width = image_dims

    dx = int(round_half_up(-(factor - 1.0) * box.w / 2.0))
    dy = int(round_half_up(-(factor - 1.0) * box.h / 2.0))
    new_w = int(round_half_up(factor * box.w))
    new_h = int(round_half_up(factor * box.h))
    x0, y0 = box.x + dx, box.y + dy
    x1, y1 = x0 + new_w, y0 + new_h

    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, width), min(y1, height)
    return FaceBox(x0, y0, x1 - x0, y1 - y0)


def _as_depth(depth) -> np.ndarray:
    depth = np.asarray(depth)
    if depth.ndim != 2 or depth.size == 0:
        raise ValueError(f"depth map must be a non-empty 2-D array, got shape {depth.shape}")
    if np.any(depth < 0):
        raise ValueError("depth values must be non-negative")
    return depth


def face_depth_stats(depth, face: FaceBox) -> DepthStats:
    """Mean, minimum and maximum over the non-zero depth pixels inside ``face``."""
    depth = _as_depth(depth)
    _check_inside(face, depth.shape)
    region = depth[face.slices()]
    valid = region[region != 0].astype(np.float64)
    if valid.size == 0:
        raise EmptyFaceDepthError(f"no valid depth pixels inside face box {face}")
    return DepthStats(mean=float(valid.mean()), minimum=float(valid.min()), maximum=float(valid.max()))


def window_map(values, lo: float, hi: float) -> np.ndarray:
    """Clamp to ``[lo, hi]`` and map linearly onto ``[0, 255]`` (half-up rounding).

    A degenerate window (``hi == lo``) maps everything to 128.
    """
    values = np.asarray(values, dtype=np.float64)
    if hi == lo:
        return np.full(values.shape, 128, dtype=np.uint8)
    clamped = np.clip(values, lo, hi)
    out = round_half_up(255.0 * (clamped - lo) / (hi - lo))
    return np.clip(out, 0, 255).astype(np.uint8)


def fill_portrait_holes(depth, face: FaceBox, fill_value: float, factor: float = PORTRAIT_FACTOR) -> np.ndarray:
    """Replace zeros inside the expanded portrait box by ``fill_value``; returns a float copy."""
    depth = _as_depth(depth)
    portrait = expand_bbox(face, factor, depth.shape)
    filled = depth.astype(np.float64)
    region = filled[portrait.slices()]
    region[region == 0] = fill_value
    return filled


def normalize_depth_alg1(depth, face: FaceBox, portrait_factor: float = PORTRAIT_FACTOR) -> np.ndarray:
    """Hole-fill with the face mean, then window on the observed face ``[min, max]``.

    The statistics are taken before hole filling, in the order the procedure
    lists them.
    """
    stats = face_depth_stats(depth, face)
    filled = fill_portrait_holes(depth, face, stats.mean, portrait_factor)
    return window_map(filled, stats.minimum, stats.maximum)


def normalize_depth_alg2(depth, face: FaceBox, portrait_factor: float = PORTRAIT_FACTOR) -> np.ndarray:
    """Hole-fill with the face mean, then window on ``mean +/- 50`` mm."""
    stats = face_depth_stats(depth, face)
    filled = fill_portrait_holes(depth, face, stats.mean, portrait_factor)
    return window_map(filled, stats.mean - ALG2_HALF_WINDOW_MM, stats.mean + ALG2_HALF_WINDOW_MM)


NORMALIZERS = {"alg1": normalize_depth_alg1, "alg2": normalize_depth_alg2}


def quantize_ir_uniform(ir, max_raw: int = MAX_RAW_24BIT) -> np.ndarray:
    """Uniform quantization ``floor(v * 256 / (max_raw + 1))`` saturating at 255."""
    ir = np.asarray(ir)
    if ir.size and (ir.min() < 0 or ir.max() > max_raw):
        raise ValueError(f"IR values must lie in [0, {max_raw}]")
    scaled = ir.astype(np.int64) * 256 // (int(max_raw) + 1)
    return np.minimum(scaled, 255).astype(np.uint8)


def crop_multimodal(rgb, depth, ir, face: FaceBox, factor: float = PORTRAIT_FACTOR):
    """Crop the three aligned modalities with one shared expanded box."""
    rgb, depth, ir = np.asarray(rgb), np.asarray(depth), np.asarray(ir)
    dims = {m: img.shape[:2] for m, img in (("rgb", rgb), ("depth", depth), ("ir", ir))}
    if len(set(dims.values())) != 1:
        raise AlignmentError(f"modalities are not aligned: {dims}")
    box = expand_bbox(face, factor, rgb.shape[:2])
    rows, cols = box.slices()
    return rgb[rows, cols].copy(), depth[rows, cols].copy(), ir[rows, cols].copy()
