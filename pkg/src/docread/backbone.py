"""Shared convolutional backbone.

A small residual CNN with a top-down lateral-fusion path produces one fused
feature map at a fixed output stride. Every downstream branch (detection,
region cropping, context) reads this map, which is what makes extraction
losses reach the reading stack during backprop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn


@dataclass(frozen=True)
class BackboneConfig:
    in_channels: int = 1
    stage_channels: tuple[int, ...] = (32, 64, 128, 128)
    d: int = 64  # fused output channels
    stride: int = 4  # output stride, power of two
    lateral: bool = True
    norm: str = "none"  # "none" | "group"

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError("d must be positive")
        s = self.stride
        if s < 1 or (s & (s - 1)) != 0:
            raise ValueError("stride must be a power of two")
        if s > 2 ** len(self.stage_channels):
            raise ValueError("stride deeper than the stage pyramid")
        if self.norm not in ("none", "group"):
            raise ValueError(f"bad norm {self.norm!r}")


@dataclass
class SharedFeatureMap:
    """Backbone output: data laid out (h, w, d), plus geometry metadata."""

    data: torch.Tensor  # (h, w, d)
    stride: int
    image_size: tuple[int, int]  # (H, W) of the input image

    @property
    def d(self) -> int:
        return self.data.shape[2]

    @property
    def grid(self) -> tuple[int, int]:
        return self.data.shape[0], self.data.shape[1]

    def chw(self) -> torch.Tensor:
        """(1, d, h, w) view for convolutional consumers."""
        return self.data.permute(2, 0, 1).unsqueeze(0)


def _norm_layer(kind: str, channels: int) -> nn.Module:
    if kind == "group":
        groups = next(g for g in (8, 4, 2, 1) if channels % g == 0)
        return nn.GroupNorm(num_groups=groups, num_channels=channels)
    return nn.Identity()


class ResidualBlock(nn.Module):
    def __init__(self, channels: int, norm: str):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.n1 = _norm_layer(norm, channels)
        self.n2 = _norm_layer(norm, channels)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        out = self.act(self.n1(self.conv1(x)))
        out = self.n2(self.conv2(out))
        return self.act(out + x)


class Backbone(nn.Module):
    """Stem + strided residual stages + top-down fusion to one output level."""

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        self.stem = nn.Sequential(
            nn.Conv2d(cfg.in_channels, cfg.stage_channels[0], 3, padding=1),
            _norm_layer(cfg.norm, cfg.stage_channels[0]),
            nn.ReLU(inplace=True),
        )
        stages = []
        prev = cfg.stage_channels[0]
        for ch in cfg.stage_channels:
            stages.append(
                nn.Sequential(
                    nn.Conv2d(prev, ch, 3, stride=2, padding=1),
                    _norm_layer(cfg.norm, ch),
                    nn.ReLU(inplace=True),
                    ResidualBlock(ch, cfg.norm),
                )
            )
            prev = ch
        self.stages = nn.ModuleList(stages)
        self.out_level = int(np.log2(cfg.stride))  # stage index producing the output
        if cfg.lateral:
            self.laterals = nn.ModuleList(
                nn.Conv2d(ch, cfg.d, 1) for ch in cfg.stage_channels[self.out_level - 1 :]
            )
            self.fuse = nn.Conv2d(cfg.d, cfg.d, 3, padding=1)
        else:
            self.laterals = None
            self.project = nn.Conv2d(cfg.stage_channels[self.out_level - 1], cfg.d, 1)

    @property
    def max_stride(self) -> int:
        return 2 ** len(self.cfg.stage_channels)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        """image (B, C, H, W) -> fused features (B, d, ceil(H/s), ceil(W/s))."""
        _, _, h, w = image.shape
        ms = self.max_stride
        pad_h = (ms - h % ms) % ms
        pad_w = (ms - w % ms) % ms
        if pad_h or pad_w:
            image = nn.functional.pad(image, (0, pad_w, 0, pad_h))
        x = self.stem(image)
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        if self.laterals is not None:
            # Top-down: start at the deepest level, upsample and add laterals.
            pyramid = feats[self.out_level - 1 :]
            top = self.laterals[-1](pyramid[-1])
            for lateral, feat in zip(reversed(self.laterals[:-1]), reversed(pyramid[:-1])):
                top = nn.functional.interpolate(top, size=feat.shape[-2:], mode="nearest")
                top = top + lateral(feat)
            out = self.fuse(top)
        else:
            out = self.project(feats[self.out_level - 1])
        s = self.cfg.stride
        return out[:, :, : _ceil_div(h, s), : _ceil_div(w, s)]

    def extract_features(self, image) -> SharedFeatureMap:
        """Public single-image entry point; accepts numpy (H, W[, C]) or torch.

        Raises ValueError on non-finite pixels. Output is (h, w, d) with
        h = ceil(H / stride), w = ceil(W / stride).
        """
        tensor = image_to_tensor(image, self.cfg.in_channels)
        tensor = tensor.to(next(self.parameters()).dtype)
        if not torch.isfinite(tensor).all():
            raise ValueError("input image contains non-finite pixels")
        h, w = tensor.shape[-2:]
        fmap = self.forward(tensor.unsqueeze(0))[0]
        return SharedFeatureMap(
            data=fmap.permute(1, 2, 0), stride=self.cfg.stride, image_size=(h, w)
        )

    def receptive_field(self) -> int:
        """Upper bound on the output cells' receptive field, in input pixels.

        Counts only stages that actually feed the output: without lateral
        fusion the deeper stages never reach it.
        """
        depth = len(self.cfg.stage_channels) if self.laterals is not None else self.out_level
        rf, stride = 3, 1
        for _ in range(depth):
            stride *= 2
            rf += (3 - 1) * stride * 3  # downsample conv + residual block convs
        if self.laterals is not None:
            rf += (3 - 1) * self.cfg.stride  # fuse conv
        return rf


def image_to_tensor(image, in_channels: int) -> torch.Tensor:
    """(H, W[, C]) array or tensor -> (C, H, W) float tensor matching the model."""
    if isinstance(image, np.ndarray):
        tensor = torch.from_numpy(np.ascontiguousarray(image)).float()
    else:
        tensor = image.float() if image.dtype != torch.float64 else image
    if tensor.ndim == 2:
        tensor = tensor.unsqueeze(0)
    elif tensor.ndim == 3:
        tensor = tensor.permute(2, 0, 1)
    else:
        raise ValueError(f"expected (H, W) or (H, W, C) image, got shape {tuple(tensor.shape)}")
    if tensor.shape[0] != in_channels:
        if in_channels == 1:
            tensor = tensor.mean(dim=0, keepdim=True)
        elif tensor.shape[0] == 1:
            tensor = tensor.expand(in_channels, -1, -1)
        else:
            raise ValueError(f"cannot adapt {tensor.shape[0]}-channel image to {in_channels}")
    return tensor


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)
