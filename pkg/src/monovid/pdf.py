"""Pyramidal deformable fusion: joins the left/right pyramids into one
mononized pyramid on the encoder side and splits it back into a pair on the
decoder side.

Each level runs a modulated (v2-style) deformable 3x3 convolution whose
offsets and masks are predicted from the level's input by a zero-initialized
convolution, with an offset group count of two so the two views can sample
different spatial locations. Levels are processed coarse to fine; at the two
finer levels the deformable output is aggregated with the bilinearly
upsampled coarser output through a 1x1 convolution. Spatial size and
per-output channel counts are preserved, so the module acts as a pure
feature transformation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
import torchvision.ops

from .backbone import FeaturePyramid

KERNEL = 3
OFFSET_GROUPS = 2
# per spatial location: 2 coords per kernel tap per group, 1 mask per tap per group
OFFSET_CHANNELS = 2 * OFFSET_GROUPS * KERNEL * KERNEL
MASK_CHANNELS = OFFSET_GROUPS * KERNEL * KERNEL


@dataclass(frozen=True)
class DeformableConvSpec:
    kernel: int = KERNEL
    offset_groups: int = OFFSET_GROUPS
    offset_channels: int = OFFSET_CHANNELS
    mask_channels: int = MASK_CHANNELS


def deformable_conv2d(feat: torch.Tensor, offsets: torch.Tensor,
                      masks: torch.Tensor, weights: torch.Tensor,
                      bias: torch.Tensor | None = None) -> torch.Tensor:
    """Modulated deformable 3x3 convolution, stride 1, padding 1.

    ``offsets`` has ``2 * groups * 9`` channels laid out as (dy, dx) pairs per
    kernel tap per offset group; ``masks`` has ``groups * 9`` channels with
    values in [0, 1]. Samples falling outside the input read as zero.
    """
    if offsets.shape[1] != OFFSET_CHANNELS:
        raise ValueError(
            f"expected {OFFSET_CHANNELS} offset channels, got {offsets.shape[1]}")
    if masks.shape[1] != MASK_CHANNELS:
        raise ValueError(
            f"expected {MASK_CHANNELS} mask channels, got {masks.shape[1]}")
    if feat.shape[1] % OFFSET_GROUPS:
        raise ValueError("input channels must divide evenly into offset groups")
    return torchvision.ops.deform_conv2d(
        feat, offsets, weights, bias, stride=1, padding=KERNEL // 2, mask=masks)


class DeformableBlock(nn.Module):
    """One deformable convolution with its offset/mask predictor.

    The predictor is a single 3x3 convolution from the block input,
    zero-initialized so that training starts from plain convolution behavior
    (zero offsets, uniform masks).
    """

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        if in_ch % OFFSET_GROUPS:
            raise ValueError(f"in_ch must be divisible by {OFFSET_GROUPS}")
        self.predictor = nn.Conv2d(in_ch, OFFSET_CHANNELS + MASK_CHANNELS,
                                   KERNEL, padding=KERNEL // 2)
        nn.init.zeros_(self.predictor.weight)
        nn.init.zeros_(self.predictor.bias)
        self.weight = nn.Parameter(torch.empty(out_ch, in_ch, KERNEL, KERNEL))
        self.bias = nn.Parameter(torch.zeros(out_ch))
        nn.init.kaiming_uniform_(self.weight, a=math.sqrt(5))

    def predict(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        pred = self.predictor(x)
        offsets = pred[:, :OFFSET_CHANNELS]
        masks = torch.sigmoid(pred[:, OFFSET_CHANNELS:])
        return offsets, masks

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        offsets, masks = self.predict(x)
        return deformable_conv2d(x, offsets, masks, self.weight, self.bias)


class PdfModule(nn.Module):
    """Three-level deformable transformation over a feature pyramid.

    ``in_mult``/``out_mult`` scale the per-level channel width relative to
    the backbone's (e.g. the encoder-side fusion consumes concatenated
    left+right features, ``in_mult=2``; the decoder-side split emits both
    views at once, ``out_mult=2``). Offsets are freshly learned per instance;
    nothing is shared between the fuse and split modules.
    """

    def __init__(self, channels: tuple[int, int, int],
                 in_mult: int = 1, out_mult: int = 1):
        super().__init__()
        self.channels = tuple(channels)
        self.out_mult = out_mult
        ins = [in_mult * c for c in channels]
        outs = [out_mult * c for c in channels]
        self.dconv = nn.ModuleList(
            [DeformableBlock(i, o) for i, o in zip(ins, outs)])
        # 1x1 aggregation of (deformable output, upsampled coarser output)
        self.agg = nn.ModuleList([
            nn.Conv2d(outs[0] + outs[1], outs[0], 1),
            nn.Conv2d(outs[1] + outs[2], outs[1], 1),
        ])

    def forward(self, levels) -> FeaturePyramid:
        x1, x2, x3 = levels
        y3 = self.dconv[2](x3)
        up3 = F.interpolate(y3, scale_factor=2, mode="bilinear", align_corners=False)
        y2 = self.agg[1](torch.cat([self.dconv[1](x2), up3], dim=1))
        up2 = F.interpolate(y2, scale_factor=2, mode="bilinear", align_corners=False)
        y1 = self.agg[0](torch.cat([self.dconv[0](x1), up2], dim=1))
        return FeaturePyramid((y1, y2, y3))


class PdfFuse(nn.Module):
    """Fuse left/right pyramids into a single pyramid of the same shape."""

    def __init__(self, channels: tuple[int, int, int]):
        super().__init__()
        self.pdf = PdfModule(channels, in_mult=2, out_mult=1)

    def forward(self, p_left: FeaturePyramid, p_right: FeaturePyramid) -> FeaturePyramid:
        for a, b in zip(p_left, p_right):
            if a.shape != b.shape:
                raise ValueError("left/right pyramids must be shape-identical")
        cat = [torch.cat([a, b], dim=1) for a, b in zip(p_left, p_right)]
        return self.pdf(cat)


class PdfSplit(nn.Module):
    """Split a mononized pyramid into left/right pyramids.

    Each level emits twice the backbone width and is divided channel-wise,
    left half first.
    """

    def __init__(self, channels: tuple[int, int, int]):
        super().__init__()
        self.channels = tuple(channels)
        self.pdf = PdfModule(channels, in_mult=1, out_mult=2)

    def forward(self, p_mono: FeaturePyramid) -> tuple[FeaturePyramid, FeaturePyramid]:
        both = self.pdf(p_mono.levels)
        lefts, rights = [], []
        for c, t in zip(self.channels, both):
            lefts.append(t[:, :c])
            rights.append(t[:, c:])
        return FeaturePyramid(lefts), FeaturePyramid(rights)
