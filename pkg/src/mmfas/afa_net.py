"""AFA: attention-based multi-modal anti-spoofing network with SR feature augmentation.

Layout (per modality branch, then a shared trunk)::

    x_m --InputConvBlock(stride 1)---------------------+
    (x_rgb, x_depth, x_ir) --MFAM--> sr_m (2x) --InputConvBlock(stride 2)--+
                                   concat -> 1x1 conv -> DAM-SE -> SE -> f_m
    concat(f_rgb, f_depth, f_ir) -> 1x1 conv -> DAM -> DAM -> GAP -> FC -> FC -> logits

All attention gates (DAM spatial/channel, SE) are sigmoids, so they lie in
``(0, 1)``. Batch norm follows every 3x3 convolution; those convolutions
carry no bias.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

MODALITIES = ("rgb", "depth", "ir")
MODALITY_CHANNELS = {"rgb": 3, "depth": 1, "ir": 1}
UPSAMPLE_MODES = ("nearest", "transposed")
AUGMENT_MODULES = ("mfam", "sfam")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    in_resolution: int = 8
    sr_resolution: int = 16
    branch_channels: tuple[int, ...] = (32, 64, 128)
    sr_channels: int = 32
    trunk_channels: tuple[int, int] = (128, 256)
    fc_hidden: int = 256
    num_classes: int = 2
    se_reduction: int = 16
    upsample_mode: str = "nearest"
    feature_augment: str = "mfam"
    modality_channels: tuple[int, int, int] = field(default=(3, 1, 1))

    def __post_init__(self):
        object.__setattr__(self, "branch_channels", tuple(self.branch_channels))
        object.__setattr__(self, "trunk_channels", tuple(self.trunk_channels))
        object.__setattr__(self, "modality_channels", tuple(self.modality_channels))
        self.validate()

    def validate(self) -> None:
        if self.in_resolution < 2 or self.in_resolution % 2:
            raise ConfigError(f"in_resolution must be even and >= 2, got {self.in_resolution}")
        if self.sr_resolution != 2 * self.in_resolution:
            raise ConfigError("sr_resolution must be exactly 2 * in_resolution")
        if len(self.branch_channels) != 3:
            raise ConfigError("branch_channels needs one width per input conv module (3)")
        if len(self.trunk_channels) != 2:
            raise ConfigError("trunk_channels needs two widths")
        if len(self.modality_channels) != 3:
            raise ConfigError("modality_channels needs one entry per modality")
        widths = (*self.branch_channels, *self.trunk_channels, *self.modality_channels,
                  self.sr_channels, self.fc_hidden, self.se_reduction)
        if any(int(c) < 1 for c in widths):
            raise ConfigError("all channel counts must be >= 1")
        if self.num_classes != 2:
            raise ConfigError("the classifier is binary (live / spoof)")
        if self.upsample_mode not in UPSAMPLE_MODES:
            raise ConfigError(f"upsample_mode must be one of {UPSAMPLE_MODES}")
        if self.feature_augment not in AUGMENT_MODULES:
            raise ConfigError(f"feature_augment must be one of {AUGMENT_MODULES}")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    @property
    def channels(self) -> dict[str, int]:
        return dict(zip(MODALITIES, self.modality_channels))


def conv3x3(in_ch: int, out_ch: int, stride: int = 1, bias: bool = False) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=bias)


class ConvBNReLU(nn.Sequential):
    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__(conv3x3(in_ch, out_ch, stride), nn.BatchNorm2d(out_ch), nn.ReLU(inplace=False))


class InputConvBlock(nn.Sequential):
    """Three conv3x3-BN-ReLU modules; ``stride`` applies to the first one only."""

    def __init__(self, in_ch: int, channels=(32, 64, 128), stride: int = 1):
        if stride not in (1, 2):
            raise ConfigError(f"stride must be 1 or 2, got {stride}")
        widths = (in_ch, *channels)
        super().__init__(*(ConvBNReLU(widths[i], widths[i + 1], stride if i == 0 else 1) for i in range(len(channels))))
        self.in_channels = in_ch
        self.out_channels = widths[-1]

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ValueError(f"InputConvBlock expects {self.in_channels} channels, got {x.shape[1]}")
        return super().forward(x)


class SEBlock(nn.Module):
    """Squeeze-and-excitation: GAP -> FC (reduce) -> ReLU -> FC (restore) -> sigmoid gate."""

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.fc1 = nn.Linear(channels, hidden)
        self.fc2 = nn.Linear(hidden, channels)

    def gate(self, x):
        pooled = x.mean(dim=(2, 3))
        return torch.sigmoid(self.fc2(F.relu(self.fc1(pooled))))

    def forward(self, x):
        return x * self.gate(x)[:, :, None, None]


class DAM(nn.Module):
    """Residual block with a grouped-conv spatial gate and a channel gate.

    The spatial gate is a 3x3 convolution of the block input with
    ``gcd(in_ch, out_ch)`` groups and one output map per group; each map is
    broadcast over the ``out_ch / groups`` channels of its group and
    multiplies the first conv-BN stage. The channel gate (GAP -> 1x1 conv ->
    sigmoid) multiplies the second conv-BN stage. The skip (identity, or
    1x1 conv + BN when widths differ) is added before the final ReLU.
    """

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.in_channels, self.out_channels = in_ch, out_ch
        self.groups = math.gcd(in_ch, out_ch)
        self.conv1 = conv3x3(in_ch, out_ch)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.spatial = nn.Conv2d(in_ch, self.groups, 3, padding=1, groups=self.groups, bias=True)
        self.conv2 = conv3x3(out_ch, out_ch)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.channel = nn.Conv2d(out_ch, out_ch, 1, bias=True)
        if in_ch != out_ch:
            self.proj = nn.Sequential(nn.Conv2d(in_ch, out_ch, 1, bias=False), nn.BatchNorm2d(out_ch))
        else:
            self.proj = None

    def spatial_gate(self, x):
        gate = torch.sigmoid(self.spatial(x))
        return gate.repeat_interleave(self.out_channels // self.groups, dim=1)

    def channel_gate(self, y):
        return torch.sigmoid(self.channel(y.mean(dim=(2, 3), keepdim=True)))

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ValueError(f"DAM expects {self.in_channels} channels, got {x.shape[1]}")
        y = F.relu(self.bn1(self.conv1(x)) * self.spatial_gate(x))
        y = self.bn2(self.conv2(y))
        y = y * self.channel_gate(y)
        skip = x if self.proj is None else self.proj(x)
        return F.relu(y + skip)


class DAMSE(nn.Module):
    """DAM -> conv3x3-BN -> SE, wrapped in an outer skip connection."""

    def __init__(self, in_ch: int, out_ch: int, reduction: int = 16):
        super().__init__()
        self.dam = DAM(in_ch, out_ch)
        self.conv = conv3x3(out_ch, out_ch)
        self.bn = nn.BatchNorm2d(out_ch)
        self.se = SEBlock(out_ch, reduction)
        if in_ch != out_ch:
            self.proj = nn.Sequential(nn.Conv2d(in_ch, out_ch, 1, bias=False), nn.BatchNorm2d(out_ch))
        else:
            self.proj = None

    def forward(self, x):
        y = self.se(self.bn(self.conv(self.dam(x))))
        skip = x if self.proj is None else self.proj(x)
        return F.relu(y + skip)


class Upsample2x(nn.Module):
    def __init__(self, channels: int, mode: str = "nearest"):
        super().__init__()
        if mode not in UPSAMPLE_MODES:
            raise ConfigError(f"unknown upsample mode {mode!r}")
        self.mode = mode
        self.deconv = nn.ConvTranspose2d(channels, channels, 4, stride=2, padding=1, bias=False) if mode == "transposed" else None

    def forward(self, x):
        if self.deconv is None:
            return F.interpolate(x, scale_factor=2, mode="nearest")
        return self.deconv(x)


class SRTail(nn.Module):
    """2x upsample -> DAM -> conv3x3 back to image channels."""

    def __init__(self, channels: int, out_ch: int, upsample_mode: str):
        super().__init__()
        self.up = Upsample2x(channels, upsample_mode)
        self.dam = DAM(channels, channels)
        self.to_image = conv3x3(channels, out_ch, bias=True)

    def forward(self, x):
        return self.to_image(self.dam(self.up(x)))


class SFAM(nn.Module):
    """Single-modality feature augmentation: SR reconstruction re-encoded at stride 2."""

    def __init__(self, in_ch: int, sr_channels: int, branch_channels, upsample_mode="nearest", reduction=16):
        super().__init__()
        self.extract = nn.Sequential(ConvBNReLU(in_ch, sr_channels), DAM(sr_channels, sr_channels))
        self.se = SEBlock(sr_channels, reduction)
        self.tail = SRTail(sr_channels, in_ch, upsample_mode)
        self.augment = InputConvBlock(in_ch, branch_channels, stride=2)

    def forward(self, x):
        sr = self.tail(self.se(self.extract(x)))
        return self.augment(sr), sr


class MFAM(nn.Module):
    """Multi-modal feature augmentation for one target modality.

    Each modality gets its own shallow extractor (conv block + DAM). The
    three feature maps are concatenated in ``MODALITIES`` order, re-weighted
    by an SE block, mixed down to ``sr_channels`` by a bias-free 1x1 conv and
    passed through the SR tail.
    """

    def __init__(self, target: str, modality_channels: dict[str, int], sr_channels: int, branch_channels,
                 upsample_mode="nearest", reduction=16):
        super().__init__()
        if target not in MODALITIES:
            raise ConfigError(f"unknown modality {target!r}")
        self.target = target
        self.modality_channels = dict(modality_channels)
        self.extract = nn.ModuleDict({
            m: nn.Sequential(ConvBNReLU(modality_channels[m], sr_channels), DAM(sr_channels, sr_channels))
            for m in MODALITIES
        })
        self.se = SEBlock(len(MODALITIES) * sr_channels, reduction)
        self.mix = nn.Conv2d(len(MODALITIES) * sr_channels, sr_channels, 1, bias=False)
        out_ch = modality_channels[target]
        self.tail = SRTail(sr_channels, out_ch, upsample_mode)
        self.augment = InputConvBlock(out_ch, branch_channels, stride=2)

    def forward(self, inputs: dict[str, torch.Tensor]):
        shapes = {m: tuple(inputs[m].shape[-2:]) for m in MODALITIES}
        if len(set(shapes.values())) != 1:
            raise ValueError(f"modalities are not aligned: {shapes}")
        feats = torch.cat([self.extract[m](inputs[m]) for m in MODALITIES], dim=1)
        sr = self.tail(self.mix(self.se(feats)))
        return self.augment(sr), sr


class Branch(nn.Module):
    def __init__(self, modality: str, config: ModelConfig):
        super().__init__()
        self.modality = modality
        ch = config.channels[modality]
        width = config.branch_channels[-1]
        self.conv_block = InputConvBlock(ch, config.branch_channels, stride=1)
        if config.feature_augment == "mfam":
            self.feature_augment = MFAM(modality, config.channels, config.sr_channels, config.branch_channels,
                                        config.upsample_mode, config.se_reduction)
        else:
            self.feature_augment = SFAM(ch, config.sr_channels, config.branch_channels,
                                        config.upsample_mode, config.se_reduction)
        self.fuse = nn.Sequential(nn.Conv2d(2 * width, width, 1, bias=False), nn.BatchNorm2d(width), nn.ReLU())
        self.dam_se = DAMSE(width, width, config.se_reduction)
        self.se = SEBlock(width, config.se_reduction)

    def forward(self, inputs: dict[str, torch.Tensor]):
        x = inputs[self.modality]
        if isinstance(self.feature_augment, MFAM):
            aug, sr = self.feature_augment(inputs)
        else:
            aug, sr = self.feature_augment(x)
        feat = self.fuse(torch.cat([self.conv_block(x), aug], dim=1))
        return self.se(self.dam_se(feat)), sr


class AfaNet(nn.Module):
    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        self.config = config or ModelConfig()
        cfg = self.config
        self.branches = nn.ModuleDict({m: Branch(m, cfg) for m in MODALITIES})
        width = cfg.branch_channels[-1]
        t0, t1 = cfg.trunk_channels
        self.fuse = nn.Sequential(nn.Conv2d(len(MODALITIES) * width, t0, 1, bias=False), nn.BatchNorm2d(t0), nn.ReLU())
        self.dam1 = DAM(t0, t1)
        self.dam2 = DAM(t1, t1)
        self.fc1 = nn.Linear(t1, cfg.fc_hidden)
        self.fc2 = nn.Linear(cfg.fc_hidden, cfg.num_classes)

    def forward(self, rgb, depth, ir):
        inputs = {"rgb": rgb, "depth": depth, "ir": ir}
        r = self.config.in_resolution
        for m in MODALITIES:
            x = inputs[m]
            expected = (self.config.channels[m], r, r)
            if x.ndim != 4 or tuple(x.shape[1:]) != expected:
                raise ValueError(f"{m}: expected (B, {expected[0]}, {r}, {r}), got {tuple(x.shape)}")
        feats, srs = [], []
        for m in MODALITIES:
            f, sr = self.branches[m](inputs)
            feats.append(f)
            srs.append(sr)
        y = self.dam2(self.dam1(self.fuse(torch.cat(feats, dim=1))))
        y = F.relu(self.fc1(y.mean(dim=(2, 3))))
        return self.fc2(y), tuple(srs)


def afa_forward(model: AfaNet, batch):
    """Run ``model`` on a batch exposing ``rgb``/``depth``/``ir`` tensors (attributes or keys)."""
    get = batch.__getitem__ if isinstance(batch, dict) else lambda k: getattr(batch, k)
    return model(get("rgb"), get("depth"), get("ir"))


def init_model(config: ModelConfig | None = None, seed: int = 0, dtype=torch.float32) -> AfaNet:
    """Build a model with seeded He (fan-in) init; biases 0, batch-norm scale 1 / shift 0."""
    config = config or ModelConfig()
    config.validate()
    model = AfaNet(config)
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
                nn.init.kaiming_normal_(module.weight, mode="fan_in", nonlinearity="relu", generator=gen)
                if module.bias is not None:
                    module.bias.zero_()
            elif isinstance(module, nn.BatchNorm2d):
                module.weight.fill_(1.0)
                module.bias.zero_()
                module.running_mean.zero_()
                module.running_var.fill_(1.0)
    return model.to(dtype)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
