"""Training harness: augmentation, cyclic cosine SGD, checkpointing, evaluation, MFAM visualization."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from scipy import ndimage

from .afa_net import MODALITIES, AfaNet, ModelConfig, init_model
from .checkpoint import load_checkpoint, save_checkpoint
from .dataset_io import (MultiModalSample, collate, load_manifest, load_samples)
from .losses import cross_entropy, sr_loss, total_loss
from .metrics import EvalReport, evaluate
from .quality import resize_bilinear, to_uint8

logger = logging.getLogger(__name__)

_MODEL_FIELDS = ("in_resolution", "branch_channels", "sr_channels", "trunk_channels", "fc_hidden",
                 "se_reduction", "upsample_mode", "feature_augment")


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr_init: float = 0.1
    lr_min: float = 0.0
    momentum: float = 0.9
    weight_decay: float = 0.0005
    cycles: int = 3
    steps_per_cycle: int = 100
    seed: int = 0
    alpha: float = 0.001
    # augmentation
    flip: bool = True
    rotation_deg: float = 15.0
    scale_jitter: float = 0.12
    crop_jitter: float = 0.12
    modal_erase_prob: float = 0.3
    # bookkeeping
    eval_every: int = 0
    threshold: float = 0.5
    # model
    in_resolution: int = 8
    branch_channels: tuple[int, ...] = (32, 64, 128)
    sr_channels: int = 32
    trunk_channels: tuple[int, int] = (128, 256)
    fc_hidden: int = 256
    se_reduction: int = 16
    upsample_mode: str = "nearest"
    feature_augment: str = "mfam"

    def __post_init__(self):
        self.branch_channels = tuple(self.branch_channels)
        self.trunk_channels = tuple(self.trunk_channels)
        problems = []
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if self.steps_per_cycle < 1 or self.cycles < 1:
            problems.append("cycles and steps_per_cycle must be >= 1")
        if not 0 <= self.lr_min <= self.lr_init:
            problems.append("need 0 <= lr_min <= lr_init")
        if not 0 <= self.momentum < 1:
            problems.append("momentum must lie in [0, 1)")
        if self.weight_decay < 0 or self.alpha < 0:
            problems.append("weight_decay and alpha must be non-negative")
        if not 0 <= self.modal_erase_prob <= 1:
            problems.append("modal_erase_prob must lie in [0, 1]")
        if not (0 <= self.scale_jitter < 1 and 0 <= self.crop_jitter < 1 and self.rotation_deg >= 0):
            problems.append("jitter ratios must lie in [0, 1) and rotation_deg >= 0")
        if problems:
            raise ValueError("; ".join(problems))
        self.model_config()

    @property
    def total_steps(self) -> int:
        return self.cycles * self.steps_per_cycle

    def model_config(self) -> ModelConfig:
        kwargs = {k: getattr(self, k) for k in _MODEL_FIELDS}
        return ModelConfig(sr_resolution=2 * self.in_resolution, **kwargs)

    def without_augmentation(self) -> "TrainConfig":
        return dataclasses.replace(self, flip=False, rotation_deg=0.0, scale_jitter=0.0, crop_jitter=0.0,
                                   modal_erase_prob=0.0)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_toml(cls, path) -> "TrainConfig":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib

        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))


def lr_schedule(step: int, cfg: TrainConfig) -> float:
    """Cyclic cosine annealing: restarts at ``lr_init`` every ``steps_per_cycle`` steps."""
    if step < 0:
        raise ValueError("step must be >= 0")
    t = step % cfg.steps_per_cycle
    return cfg.lr_min + (cfg.lr_init - cfg.lr_min) * (1.0 + math.cos(math.pi * t / cfg.steps_per_cycle)) / 2.0


# --- augmentation ------------------------------------------------------------------------

def _warp(image: np.ndarray, matrix: np.ndarray, offset: np.ndarray) -> np.ndarray:
    """Sample ``image`` at ``p = matrix @ u + offset`` in normalized [-1, 1] coordinates."""
    n_h, n_w = image.shape[:2]
    uy = (np.arange(n_h) + 0.5) / n_h * 2.0 - 1.0
    ux = (np.arange(n_w) + 0.5) / n_w * 2.0 - 1.0
    gy, gx = np.meshgrid(uy, ux, indexing="ij")
    py = matrix[0, 0] * gy + matrix[0, 1] * gx + offset[0]
    px = matrix[1, 0] * gy + matrix[1, 1] * gx + offset[1]
    coords = np.stack([(py + 1.0) / 2.0 * n_h - 0.5, (px + 1.0) / 2.0 * n_w - 0.5])
    planes = [image] if image.ndim == 2 else [image[:, :, c] for c in range(image.shape[2])]
    out = [ndimage.map_coordinates(p.astype(np.float64), coords, order=1, mode="nearest") for p in planes]
    return to_uint8(out[0] if image.ndim == 2 else np.stack(out, axis=2))


def augment(sample: MultiModalSample, rng: np.random.Generator, cfg: TrainConfig) -> MultiModalSample:
    """Apply one random geometric transform to all six crops, then maybe erase one modality."""
    images = {k: getattr(sample, k) for k in ("rgb", "depth", "ir", "rgb_gt", "depth_gt", "ir_gt")}
    if cfg.flip and rng.random() < 0.5:
        images = {k: np.ascontiguousarray(v[:, ::-1]) for k, v in images.items()}
    angle = math.radians(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg)) if cfg.rotation_deg > 0 else 0.0
    scale = rng.uniform(1.0 - cfg.scale_jitter, 1.0 + cfg.scale_jitter) if cfg.scale_jitter > 0 else 1.0
    shift = rng.uniform(-cfg.crop_jitter, cfg.crop_jitter, size=2) if cfg.crop_jitter > 0 else np.zeros(2)
    if angle != 0.0 or scale != 1.0 or np.any(shift != 0.0):
        c, s = math.cos(angle), math.sin(angle)
        matrix = np.array([[c, -s], [s, c]]) / scale
        images = {k: _warp(v, matrix, shift) for k, v in images.items()}
    erased = sample.erased
    if cfg.modal_erase_prob > 0 and rng.random() < cfg.modal_erase_prob:
        erased = MODALITIES[int(rng.integers(len(MODALITIES)))]
        images[erased] = np.zeros_like(images[erased])
    return dataclasses.replace(sample, erased=erased, **images)


# --- optimizer -----------------------------------------------------------------------------

def sgd_step(params: dict[str, torch.Tensor], grads: dict[str, torch.Tensor], velocity: dict[str, torch.Tensor],
             cfg: TrainConfig, step: int) -> float:
    """Momentum SGD with L2 decay folded into the gradient; updates in place, returns the lr used.

    ``v <- m * v + g + wd * w``;  ``w <- w - lr(step) * v``
    """
    for name, g in grads.items():
        if not torch.isfinite(g).all():
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r} at step {step}")
    lr = lr_schedule(step, cfg)
    with torch.no_grad():
        for name, w in params.items():
            g = grads[name]
            v = velocity.get(name)
            if v is None:
                v = velocity[name] = torch.zeros_like(w)
            v.mul_(cfg.momentum).add_(g).add_(w, alpha=cfg.weight_decay)
            w.sub_(v, alpha=lr)
    return lr


# --- training loop ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: AfaNet
    log: list[dict] = field(default_factory=list)
    checkpoint: Path | None = None


def load_dataset(data) -> list[MultiModalSample]:
    """Accept a sample list, a manifest path, or a directory containing ``manifest.tsv``."""
    if isinstance(data, (list, tuple)):
        return list(data)
    path = Path(data)
    if path.is_dir():
        path = path / "manifest.tsv"
    return load_samples(load_manifest(path))


def batch_indices(n: int, step: int, batch_size: int, seed: int) -> np.ndarray:
    per_epoch = math.ceil(n / batch_size)
    epoch, pos = divmod(step, per_epoch)
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return order[pos * batch_size:(pos + 1) * batch_size]


def compute_loss(model: AfaNet, batch: dict[str, torch.Tensor], alpha: float):
    logits, srs = model(batch["rgb"], batch["depth"], batch["ir"])
    lc = cross_entropy(logits, batch["label"])
    ls = sr_loss(list(srs), [batch[f"{m}_gt"] for m in MODALITIES], [batch[f"{m}_mask"] for m in MODALITIES])
    return total_loss(lc, ls, alpha), logits, srs


def _velocity_state(velocity):
    return {f"velocity/{k}": v for k, v in velocity.items()}


def train(cfg: TrainConfig, data, out_dir=None, resume=None, max_steps: int | None = None,
          eval_data=None) -> TrainResult:
    """Train from scratch (or from ``resume``) up to ``cfg.total_steps`` or ``max_steps``.

    Batch order and per-sample augmentation depend only on ``(seed, step)``,
    so an interrupted run resumed from its last checkpoint reproduces the
    uninterrupted trace.
    """
    samples = load_dataset(data)
    labels = {s.label for s in samples}
    if labels != {0, 1}:
        raise ValueError("training data must contain both live and spoof samples")
    sizes = {s.resolution for s in samples}
    if sizes != {cfg.in_resolution}:
        raise ValueError(f"sample resolutions {sorted(sizes)} do not match in_resolution={cfg.in_resolution}")
    eval_samples = load_dataset(eval_data) if eval_data is not None else samples

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    velocity: dict[str, torch.Tensor] = {}
    start = 0
    if resume is not None:
        model, state, meta = load_checkpoint(resume)
        if model.config != cfg.model_config():
            raise ValueError("checkpoint model config does not match the training config")
        start = int(meta["step"])
        velocity = {k.split("/", 1)[1]: v.clone() for k, v in state.items() if k.startswith("velocity/")}
    else:
        model = init_model(cfg.model_config(), cfg.seed)
    params = dict(model.named_parameters())

    stop = cfg.total_steps if max_steps is None else min(cfg.total_steps, max_steps)
    log: list[dict] = []
    log_fh = open(out_dir / "train_log.jsonl", "a") if out_dir is not None else None
    t0 = time.perf_counter()
    ckpt = None
    try:
        for step in range(start, stop):
            model.train()
            idx = batch_indices(len(samples), step, cfg.batch_size, cfg.seed)
            batch_samples = [augment(samples[i], np.random.default_rng([cfg.seed, step, pos]), cfg)
                             for pos, i in enumerate(idx)]
            batch = collate(batch_samples)
            losses, _, _ = compute_loss(model, batch, cfg.alpha)
            grads = torch.autograd.grad(losses.total, list(params.values()))
            lr = sgd_step(params, dict(zip(params, grads)), velocity, cfg, step)
            record = {"step": step, "lr": lr, **losses.item(), "wall_time": time.perf_counter() - t0}
            log.append(record)
            _emit(log_fh, record)

            done = step + 1
            if cfg.eval_every and done % cfg.eval_every == 0:
                report = evaluate_model(model, eval_samples, threshold=cfg.threshold)[1]
                record = {"step": step, "eval": report.flat()}
                log.append(record)
                _emit(log_fh, record)
            if out_dir is not None and done % cfg.steps_per_cycle == 0:
                ckpt = out_dir / f"cycle_{done // cfg.steps_per_cycle:03d}.ckpt"
                save_checkpoint(ckpt, model, _velocity_state(velocity), {"step": done, "train_config": cfg.to_dict()})
        if out_dir is not None:
            ckpt = out_dir / ("final.ckpt" if stop == cfg.total_steps else "last.ckpt")
            save_checkpoint(ckpt, model, _velocity_state(velocity), {"step": stop, "train_config": cfg.to_dict()})
    finally:
        if log_fh is not None:
            log_fh.close()
    model.eval()
    return TrainResult(model, log, ckpt)


def _emit(fh, record) -> None:
    if "eval" in record:
        logger.info("step %d eval %s", record["step"], record["eval"])
    elif record["step"] % 50 == 0:
        logger.info("step %d lr %.5f loss %.4f", record["step"], record["lr"], record["loss"])
    if fh is not None:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


# --- evaluation ------------------------------------------------------------------------------

@torch.no_grad()
def predict_scores(model: AfaNet, samples: Sequence[MultiModalSample], batch_size: int = 256) -> np.ndarray:
    """Live-class softmax probability per sample, in eval mode."""
    model.eval()
    dtype = next(model.parameters()).dtype
    scores = []
    for start in range(0, len(samples), batch_size):
        batch = collate(samples[start:start + batch_size], dtype=dtype)
        logits, _ = model(batch["rgb"], batch["depth"], batch["ir"])
        scores.append(torch.softmax(logits, dim=1)[:, 1].double().numpy())
    return np.concatenate(scores) if scores else np.zeros(0)


def evaluate_model(model: AfaNet, samples: Sequence[MultiModalSample], threshold: float = 0.5,
                   batch_size: int = 256) -> tuple[np.ndarray, EvalReport]:
    scores = predict_scores(model, samples, batch_size)
    labels = np.array([s.label for s in samples])
    return scores, evaluate(scores, labels, threshold)


# --- MFAM visualization ----------------------------------------------------------------------

def render_difference(diff: np.ndarray) -> np.ndarray:
    """Map a signed image to uint8 symmetric around mid-gray 128 (largest |value| -> 1 or 255)."""
    diff = np.asarray(diff, dtype=np.float64)
    scale = np.max(np.abs(diff)) if diff.size else 0.0
    if scale == 0:
        return np.full(diff.shape, 128, dtype=np.uint8)
    return to_uint8(128.0 + 127.0 * diff / scale)


@torch.no_grad()
def visualize_mfam(model: AfaNet, sample: MultiModalSample) -> dict[str, dict[str, np.ndarray]]:
    """Per modality: bilinear 2x of the input, the MFAM reconstruction, and their rendered difference.

    Also returns the raw signed difference (``diff_raw``, in 8-bit units)
    and its mean absolute value (``mean_abs_diff``).
    """
    model.eval()
    dtype = next(model.parameters()).dtype
    batch = collate([sample], dtype=dtype)
    _, srs = model(batch["rgb"], batch["depth"], batch["ir"])
    out = {}
    for m, sr in zip(MODALITIES, srs):
        low = getattr(sample, m).astype(np.float64)
        size = (2 * low.shape[0], 2 * low.shape[1])
        bilinear = resize_bilinear(low, size)
        pred = sr[0].double().numpy() * 255.0
        pred = pred.transpose(1, 2, 0) if pred.shape[0] == 3 else pred[0]
        diff = pred - bilinear
        out[m] = {
            "bilinear": to_uint8(bilinear),
            "sr": to_uint8(pred),
            "diff": render_difference(diff),
            "diff_raw": diff,
            "mean_abs_diff": float(np.mean(np.abs(diff))),
        }
    return out
