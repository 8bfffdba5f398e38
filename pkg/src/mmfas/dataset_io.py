"""Manifest-based multi-modal dataset loading and a seeded synthetic face generator.

Manifest: tab-separated text with a header line and the columns in
``MANIFEST_COLUMNS``; image paths are relative to the manifest's directory.
Directory layout used by the generator and understood by ``make_manifest``::

    ROOT/<label>/<attack_type>/<sample_id>/{rgb,depth,ir,rgb_gt,depth_gt,ir_gt}.png
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch
from PIL import Image

from .imageio import read_png8, write_png8
from .quality import DegradeSpec, degrade, to_uint8

MANIFEST_COLUMNS = ("sample_id", "rgb", "depth", "ir", "rgb_gt", "depth_gt", "ir_gt", "label", "attack_type", "camera_tag")
IMAGE_KEYS = ("rgb", "depth", "ir", "rgb_gt", "depth_gt", "ir_gt")
LABELS = ("spoof", "live")  # index == numeric label
ATTACK_TYPES = ("none", "print_bw", "print_color", "screen", "mask3d")
SPOOF_TYPES = ATTACK_TYPES[1:]
MODALITY_KEYS = ("rgb", "depth", "ir")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    rgb: str
    depth: str
    ir: str
    rgb_gt: str
    depth_gt: str
    ir_gt: str
    label: str
    attack_type: str = "none"
    camera_tag: str = ""
    root: Path = field(default=Path("."), compare=False)

    def path(self, key: str) -> Path:
        return self.root / getattr(self, key)

    def row(self) -> list[str]:
        return [str(getattr(self, c)) for c in MANIFEST_COLUMNS]


@dataclass
class MultiModalSample:
    """Aligned uint8 crops: low-res ``r x r`` inputs and ``2r x 2r`` ground truth.

    RGB arrays are ``HxWx3``, depth and IR ``HxW``. ``erased`` names a
    modality zeroed by augmentation (its SR target is then ignored).
    """

    sample_id: str
    rgb: np.ndarray
    depth: np.ndarray
    ir: np.ndarray
    rgb_gt: np.ndarray
    depth_gt: np.ndarray
    ir_gt: np.ndarray
    label: int
    attack_type: str = "none"
    camera_tag: str = ""
    erased: str | None = None

    def __post_init__(self):
        r = self.rgb.shape[0]
        for key in IMAGE_KEYS:
            img = getattr(self, key)
            size = 2 * r if key.endswith("_gt") else r
            channels = 3 if key.startswith("rgb") else None
            expected = (size, size, 3) if channels else (size, size)
            if img.shape != expected:
                raise ValueError(f"{self.sample_id}: {key} has shape {img.shape}, expected {expected}")
            if img.dtype != np.uint8:
                raise ValueError(f"{self.sample_id}: {key} must be uint8, got {img.dtype}")
        if self.label not in (0, 1):
            raise ValueError(f"{self.sample_id}: label must be 0 (spoof) or 1 (live)")
        if self.erased is not None and self.erased not in MODALITY_KEYS:
            raise ValueError(f"{self.sample_id}: unknown erased modality {self.erased!r}")

    @property
    def resolution(self) -> int:
        return self.rgb.shape[0]


def _image_shape(path: Path) -> tuple[int, ...]:
    with Image.open(path) as im:
        w, h = im.size
        bands = len(im.getbands())
    return (h, w, bands) if bands > 1 else (h, w)


def _validate_entry(entry: ManifestEntry, check_files: bool) -> None:
    where = f"entry {entry.sample_id!r}"
    if not entry.sample_id:
        raise ManifestError("entry with empty sample_id")
    if entry.label not in LABELS:
        raise ManifestError(f"{where}: field 'label' has unknown value {entry.label!r}")
    if entry.attack_type not in ATTACK_TYPES:
        raise ManifestError(f"{where}: field 'attack_type' has unknown value {entry.attack_type!r}")
    if (entry.label == "live") != (entry.attack_type == "none"):
        raise ManifestError(f"{where}: field 'attack_type' {entry.attack_type!r} inconsistent with label {entry.label!r}")
    if not check_files:
        return
    shapes = {}
    for key in IMAGE_KEYS:
        p = entry.path(key)
        if not p.is_file():
            raise ManifestError(f"{where}: field {key!r} points to missing file {p}")
        shapes[key] = _image_shape(p)
    r = shapes["rgb"][0]
    for key, shape in shapes.items():
        size = 2 * r if key.endswith("_gt") else r
        if shape[:2] != (size, size):
            raise ManifestError(f"{where}: field {key!r} has size {shape[:2]}, expected {(size, size)} (low-res r, GT 2r)")
        want_rgb = key.startswith("rgb")
        if want_rgb != (len(shape) == 3):
            raise ManifestError(f"{where}: field {key!r} has wrong channel layout {shape}")


def load_manifest(path, check_files: bool = True) -> list[ManifestEntry]:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    root = path.parent
    entries = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None:
            return []
        if tuple(header) != MANIFEST_COLUMNS:
            raise ManifestError(f"{path}: header must list columns {list(MANIFEST_COLUMNS)}, got {header}")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(MANIFEST_COLUMNS):
                raise ManifestError(f"{path}:{lineno}: expected {len(MANIFEST_COLUMNS)} fields, got {len(row)}")
            entry = ManifestEntry(*row, root=root)
            _validate_entry(entry, check_files)
            entries.append(entry)
    return entries


def write_manifest(path, entries: Sequence[ManifestEntry]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for e in entries:
            writer.writerow(e.row())


def make_manifest(root, out_path, camera_tag: str = "") -> list[ManifestEntry]:
    """Index a ``ROOT/<label>/<attack_type>/<sample_id>/`` tree into a manifest."""
    root = Path(root)
    out_path = Path(out_path)
    entries = []
    for sample_dir in sorted(p for p in root.glob("*/*/*") if p.is_dir()):
        label, attack = sample_dir.parent.parent.name, sample_dir.parent.name
        rel = Path(os.path.relpath(sample_dir, out_path.parent))
        paths = {k: (rel / f"{k}.png").as_posix() for k in IMAGE_KEYS}
        entry = ManifestEntry(sample_dir.name, label=label, attack_type=attack, camera_tag=camera_tag,
                              root=out_path.parent, **paths)
        _validate_entry(entry, check_files=True)
        entries.append(entry)
    write_manifest(out_path, entries)
    return entries


def load_sample(entry: ManifestEntry) -> MultiModalSample:
    images = {}
    for key in IMAGE_KEYS:
        img = read_png8(entry.path(key))
        if not key.startswith("rgb") and img.ndim == 3:
            img = img[:, :, 0]
        images[key] = img
    try:
        return MultiModalSample(entry.sample_id, label=LABELS.index(entry.label), attack_type=entry.attack_type,
                                camera_tag=entry.camera_tag, **images)
    except ValueError as exc:
        raise ManifestError(f"entry {entry.sample_id!r}: {exc}") from exc


def load_samples(entries: Sequence[ManifestEntry]) -> list[MultiModalSample]:
    return [load_sample(e) for e in entries]


def batch_order(n: int, seed: int, epoch: int = 0, shuffle: bool = True) -> np.ndarray:
    if not shuffle:
        return np.arange(n)
    return np.random.default_rng([seed, epoch]).permutation(n)


def batches(items: Sequence, batch_size: int, seed: int = 0, shuffle: bool = True, epoch: int = 0) -> Iterator[list]:
    """Yield lists of ``items``; the final partial batch is kept.

    Manifest entries are loaded (and validated) into samples as they are batched.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = batch_order(len(items), seed, epoch, shuffle)
    for start in range(0, len(order), batch_size):
        chunk = [items[i] for i in order[start:start + batch_size]]
        yield [load_sample(x) if isinstance(x, ManifestEntry) else x for x in chunk]


def _chw(img: np.ndarray) -> np.ndarray:
    img = img.astype(np.float32) / 255.0
    return img.transpose(2, 0, 1) if img.ndim == 3 else img[None]


def collate(samples: Sequence[MultiModalSample], dtype=torch.float32) -> dict[str, torch.Tensor]:
    """Stack samples into ``(B, C, H, W)`` tensors in ``[0, 1]`` plus labels and SR masks."""
    out = {}
    for key in IMAGE_KEYS:
        out[key] = torch.from_numpy(np.stack([_chw(getattr(s, key)) for s in samples])).to(dtype)
    out["label"] = torch.tensor([s.label for s in samples], dtype=torch.long)
    for m in MODALITY_KEYS:
        out[f"{m}_mask"] = torch.tensor([0.0 if s.erased == m else 1.0 for s in samples], dtype=dtype)
    return out


# --- synthetic generator -------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    n_live: int = 32
    n_spoof: int = 32
    resolution: int = 8
    seed: int = 0
    noise: float = 4.0
    camera_tag: str = "synthetic"
    live_relief: tuple[float, float] = (70.0, 120.0)
    spoof_tilt: float = 8.0
    spoof_types: tuple[str, ...] = SPOOF_TYPES

    def __post_init__(self):
        if self.n_live < 1 or self.n_spoof < 1:
            raise ValueError("n_live and n_spoof must be >= 1")
        if self.resolution < 4:
            raise ValueError("resolution must be >= 4")
        unknown = set(self.spoof_types) - set(SPOOF_TYPES)
        if unknown or not self.spoof_types:
            raise ValueError(f"spoof_types must be a non-empty subset of {SPOOF_TYPES}")


def _face_geometry(rng, n):
    yy, xx = (np.mgrid[0:n, 0:n] + 0.5) / n * 2.0 - 1.0
    cx, cy = rng.uniform(-0.12, 0.12, size=2)
    ax, ay = rng.uniform(0.55, 0.7), rng.uniform(0.7, 0.85)
    d2 = ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2
    return xx, yy, cx, cy, d2


def _features(xx, yy, cx, cy):
    """Darkening map for eyes and mouth (0..1)."""
    eyes = sum(np.exp(-(((xx - cx - ex) / 0.12) ** 2 + ((yy - cy + 0.2) / 0.08) ** 2)) for ex in (-0.25, 0.25))
    mouth = np.exp(-(((xx - cx) / 0.25) ** 2 + ((yy - cy - 0.45) / 0.07) ** 2))
    return np.clip(eyes + mouth, 0.0, 1.0)


def _render(rng, n, live: bool, attack: str, spec: SyntheticSpec):
    xx, yy, cx, cy, d2 = _face_geometry(rng, n)
    inside = d2 < 1.0
    dome = np.sqrt(np.clip(1.0 - d2, 0.0, 1.0))
    feats = _features(xx, yy, cx, cy)
    skin = np.array([rng.uniform(170, 230), rng.uniform(120, 170), rng.uniform(90, 140)])
    background = rng.uniform(30, 90, size=3)
    noise = lambda *shape: rng.normal(0.0, spec.noise, size=shape)

    if live:
        relief = rng.uniform(*spec.live_relief)
        depth = np.where(inside, 110.0 + relief * dome, 40.0)
        shading = 0.55 + 0.45 * dome
        ir = np.where(inside, 70.0 + 120.0 * dome - 40.0 * feats, 25.0)
    else:
        tilt = rng.uniform(-spec.spoof_tilt, spec.spoof_tilt, size=2)
        plane = 140.0 + tilt[0] * xx + tilt[1] * yy
        if attack == "mask3d":
            rim = np.exp(-((np.sqrt(d2) - 1.0) / 0.12) ** 2)
            depth = np.where(d2 < 1.3, plane + rng.uniform(40, 70) * rim, 40.0)
        else:
            depth = np.where(np.abs(xx) < 0.95, plane, 40.0)
        # printed/displayed shading does not follow the (flat) geometry
        sx, sy = rng.uniform(-0.5, 0.5, size=2)
        shading = 0.6 + 0.4 * np.exp(-((xx - sx) ** 2 + (yy - sy) ** 2) / 0.5)
        ir_level = {"print_bw": 110.0, "print_color": 90.0, "screen": 20.0, "mask3d": 100.0}[attack]
        ir = ir_level + 30.0 * rng.random() * (xx + 1.0) / 2.0
        if attack == "screen":
            skin = skin * 1.1
            shading = shading * (0.92 + 0.08 * np.sin(np.pi * n / 3.0 * (xx + yy)))

    face_rgb = skin[None, None, :] * shading[..., None] * (1.0 - 0.6 * feats[..., None])
    rgb = np.where(inside[..., None], face_rgb, background[None, None, :])
    if attack == "print_bw":
        rgb = np.repeat(rgb.mean(axis=2, keepdims=True), 3, axis=2)
    rgb = rgb + noise(n, n, 3)
    depth = depth + noise(n, n)
    ir = ir + noise(n, n)
    return to_uint8(rgb), to_uint8(depth), to_uint8(ir)


def synthesize_sample(spec: SyntheticSpec, index: int, live: bool, attack: str, sample_id: str) -> MultiModalSample:
    """Render one sample at ``2r`` and derive the ``r`` inputs by degradation."""
    rng = np.random.default_rng([spec.seed, index])
    n = 2 * spec.resolution
    rgb_gt, depth_gt, ir_gt = _render(rng, n, live, attack, spec)
    low = DegradeSpec(spec.resolution, blur_enabled=True, kernel_size=3, sigma=1.5)
    return MultiModalSample(
        sample_id,
        rgb=degrade(rgb_gt, low), depth=degrade(depth_gt, low), ir=degrade(ir_gt, low),
        rgb_gt=rgb_gt, depth_gt=depth_gt, ir_gt=ir_gt,
        label=1 if live else 0, attack_type=attack, camera_tag=spec.camera_tag,
    )


def synthesize(spec: SyntheticSpec) -> list[MultiModalSample]:
    samples = []
    for i in range(spec.n_live):
        samples.append(synthesize_sample(spec, i, True, "none", f"live_{i:05d}"))
    for j in range(spec.n_spoof):
        attack = spec.spoof_types[j % len(spec.spoof_types)]
        samples.append(synthesize_sample(spec, spec.n_live + j, False, attack, f"spoof_{j:05d}"))
    return samples


def save_samples(samples: Sequence[MultiModalSample], out_dir) -> list[ManifestEntry]:
    out_dir = Path(out_dir)
    entries = []
    for s in samples:
        rel = Path(LABELS[s.label]) / s.attack_type / s.sample_id
        (out_dir / rel).mkdir(parents=True, exist_ok=True)
        paths = {}
        for key in IMAGE_KEYS:
            write_png8(out_dir / rel / f"{key}.png", getattr(s, key))
            paths[key] = (rel / f"{key}.png").as_posix()
        entries.append(ManifestEntry(s.sample_id, label=LABELS[s.label], attack_type=s.attack_type,
                                     camera_tag=s.camera_tag, root=out_dir, **paths))
    write_manifest(out_dir / "manifest.tsv", entries)
    return entries


def generate_synthetic(spec: SyntheticSpec, out_dir) -> list[ManifestEntry]:
    """Write images plus ``manifest.tsv`` under ``out_dir``; returns the entries."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        return save_samples(synthesize(spec), out_dir)
    except OSError as exc:
        raise OSError(f"cannot write synthetic dataset under {out_dir}: {exc}") from exc


def face_depth_variance(sample: MultiModalSample, use_gt: bool = True) -> float:
    """Depth variance over the central face region (planarity statistic)."""
    depth = (sample.depth_gt if use_gt else sample.depth).astype(np.float64)
    n = depth.shape[0]
    lo, hi = n // 4, n - n // 4
    return float(depth[lo:hi, lo:hi].var())
