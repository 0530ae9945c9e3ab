"""Feature extractor and reconstructor backbones.

Both are three-level pyramids built from residual blocks with no
normalization layers; downsampling is a stride-2 convolution and upsampling
is bilinear interpolation followed by a convolution. The reconstructor
mirrors the extractor, combines skip features with upsampled features via
trainable scalar coefficients, and accepts the previous time step's pyramid
through a concat + 1x1-conv fusion for recurrent operation.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class ExtractorConfig:
    channels_per_level: tuple[int, int, int] = (64, 128, 192)
    residual_blocks_per_level: int = 3
    kernel_size: int = 3

    def __post_init__(self):
        if len(self.channels_per_level) != 3:
            raise ValueError("exactly three pyramid levels are supported")
        if self.residual_blocks_per_level < 1:
            raise ValueError("need at least one residual block per level")


class FeaturePyramid:
    """Exactly three feature maps with spatial dims halving per level."""

    __slots__ = ("levels",)

    def __init__(self, levels):
        levels = tuple(levels)
        if len(levels) != 3:
            raise ValueError(f"a pyramid has exactly 3 levels, got {len(levels)}")
        h, w = levels[0].shape[-2:]
        for l, t in enumerate(levels):
            eh, ew = h >> l, w >> l
            if t.shape[-2:] != (eh, ew):
                raise ValueError(
                    f"level {l + 1} must be {eh}x{ew}, got {tuple(t.shape[-2:])}")
        self.levels = levels

    def __iter__(self):
        return iter(self.levels)

    def __getitem__(self, i):
        return self.levels[i]

    @property
    def channels(self) -> tuple[int, int, int]:
        return tuple(t.shape[-3] for t in self.levels)

    def shape_like(self, other: "FeaturePyramid") -> bool:
        return all(a.shape == b.shape for a, b in zip(self.levels, other.levels))

    def zeros_like(self) -> "FeaturePyramid":
        return FeaturePyramid(tuple(torch.zeros_like(t) for t in self.levels))

    def detach(self) -> "FeaturePyramid":
        return FeaturePyramid(tuple(t.detach() for t in self.levels))


class ResidualBlock(nn.Module):
    """conv-relu-conv with identity shortcut; batch normalization removed."""

    def __init__(self, channels: int, kernel_size: int = 3):
        super().__init__()
        pad = kernel_size // 2
        self.conv1 = nn.Conv2d(channels, channels, kernel_size, padding=pad)
        self.conv2 = nn.Conv2d(channels, channels, kernel_size, padding=pad)

    def forward(self, x):
        return x + self.conv2(F.relu(self.conv1(x)))


def _res_stack(channels: int, count: int, kernel_size: int) -> nn.Sequential:
    return nn.Sequential(*[ResidualBlock(channels, kernel_size) for _ in range(count)])


class FeatureExtractor(nn.Module):
    """Hierarchically extracts a three-level pyramid from an RGB image."""

    def __init__(self, cfg: ExtractorConfig, in_channels: int = 3):
        super().__init__()
        c1, c2, c3 = cfg.channels_per_level
        k = cfg.kernel_size
        pad = k // 2
        n = cfg.residual_blocks_per_level
        self.cfg = cfg
        self.head = nn.Conv2d(in_channels, c1, k, padding=pad)
        self.level1 = _res_stack(c1, n, k)
        self.down1 = nn.Conv2d(c1, c2, k, stride=2, padding=pad)
        self.level2 = _res_stack(c2, n, k)
        self.down2 = nn.Conv2d(c2, c3, k, stride=2, padding=pad)
        self.level3 = _res_stack(c3, n, k)

    def forward(self, x: torch.Tensor) -> FeaturePyramid:
        h, w = x.shape[-2:]
        if h % 4 or w % 4:
            raise ValueError(f"input dims must be multiples of 4, got {h}x{w}")
        f1 = self.level1(F.relu(self.head(x)))
        f2 = self.level2(F.relu(self.down1(f1)))
        f3 = self.level3(F.relu(self.down2(f2)))
        return FeaturePyramid((f1, f2, f3))


class _Upsample(nn.Module):
    """Bilinear x2 followed by a convolution."""

    def __init__(self, in_ch: int, out_ch: int, kernel_size: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel_size, padding=kernel_size // 2)

    def forward(self, x):
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        return self.conv(x)


class Reconstructor(nn.Module):
    """Rebuilds an image from a pyramid, symmetric to the extractor.

    Levels 1-2 arrive via skip connections and are linearly combined with the
    upsampled deeper feature through trainable per-level coefficients. The
    previous time step's pyramid, when given, is fused in at every level by
    channel concatenation and a 1x1 convolution; an absent pyramid is treated
    as all-zeros, so the first frame of a sequence is a deterministic cold
    start. The final layer has no activation.
    """

    def __init__(self, cfg: ExtractorConfig, out_channels: int = 3):
        super().__init__()
        c1, c2, c3 = cfg.channels_per_level
        k = cfg.kernel_size
        n = cfg.residual_blocks_per_level
        self.cfg = cfg
        self.fuse_prev = nn.ModuleList([
            nn.Conv2d(2 * c, c, 1) for c in (c1, c2, c3)
        ])
        self.level3 = _res_stack(c3, n, k)
        self.up2 = _Upsample(c3, c2, k)
        self.level2 = _res_stack(c2, n, k)
        self.up1 = _Upsample(c2, c1, k)
        self.level1 = _res_stack(c1, n, k)
        self.tail = nn.Conv2d(c1, out_channels, k, padding=k // 2)
        # (skip, upsampled) combination weights for levels 1 and 2
        self.skip_coeff = nn.Parameter(torch.ones(2))
        self.up_coeff = nn.Parameter(torch.ones(2))

    def forward(self, pyr: FeaturePyramid,
                prev: FeaturePyramid | None = None) -> torch.Tensor:
        if prev is None:
            prev = pyr.zeros_like()
        if not pyr.shape_like(prev):
            raise ValueError("previous pyramid must match the current one in shape")
        fused = [conv(torch.cat([p, q], dim=1))
                 for conv, p, q in zip(self.fuse_prev, pyr, prev)]
        x = self.level3(fused[2])
        x = self.skip_coeff[1] * fused[1] + self.up_coeff[1] * self.up2(x)
        x = self.level2(x)
        x = self.skip_coeff[0] * fused[0] + self.up_coeff[0] * self.up1(x)
        x = self.level1(x)
        return self.tail(x)
