"""Differentiable-in-training degradations between the encoder and decoder:
the 8-bit quantization layer and the compression-noise simulation (CNS).

Both degradations are non-differentiable in the forward direction (rounding,
stochastic block moves), so each passes gradients through unchanged — the
straight-through identity proxy. CNS mimics codec loss in two flavors:
intra-frame noise via blockwise DCT quantization and inter-frame noise via
16x16 macroblock jittering driven by optical-flow variance, mirroring the
I/P-frame structure of conventional codecs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
import torch

from .types import FlowField, Frame

MACROBLOCK = 16
DCT_BLOCK = 8

# Standard JPEG luminance quantization table, applied to all three channels.
JPEG_LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


@dataclass(frozen=True)
class NoiseSpec:
    """Parameters of the simulated codec noise.

    ``mode`` selects the flavor for single-frame application; sequence-level
    scheduling in :func:`cns_apply` draws the mode per frame instead.
    """

    mode: str = "intra"                 # "intra" | "inter"
    intra_quality: int = 50             # 1..100, JPEG-style
    jitter_threshold: float = 4.0       # flow variance (px^2) giving certain jitter
    jitter_max_shift: int = 2           # px
    rng_seed: int = 0
    quality_range: tuple[int, int] = (30, 70)
    inter_prob: float = 0.75
    enabled: bool = True

    def __post_init__(self):
        if self.mode not in ("intra", "inter"):
            raise ValueError(f"mode must be 'intra' or 'inter', got {self.mode!r}")
        if not (1 <= self.intra_quality <= 100):
            raise ValueError("intra_quality must lie in [1, 100]")
        if self.jitter_max_shift < 1:
            raise ValueError("jitter_max_shift must be >= 1")
        lo, hi = self.quality_range
        if not (1 <= lo <= hi <= 100):
            raise ValueError("quality_range must satisfy 1 <= lo <= hi <= 100")


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


class _QuantizeSTE(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x):
        return torch.floor(torch.clamp(x, 0.0, 1.0) * 255.0 + 0.5) / 255.0

    @staticmethod
    def backward(ctx, grad):
        return grad


def quantize_tensor(x: torch.Tensor) -> torch.Tensor:
    """8-bit quantization: clamp to [0,1], snap to the 1/255 grid.

    Forward rounds (half away from zero); backward is the identity, so the
    layer is gradient-transparent.
    """
    if not torch.isfinite(x).all():
        raise ValueError("quantize requires finite input")
    return _QuantizeSTE.apply(x)


def quantize_frame(f: Frame) -> Frame:
    from .types import snap_to_u8_grid
    return snap_to_u8_grid(f)


def quality_scaled_table(quality: int) -> np.ndarray:
    """JPEG quality -> scaled quantization table (quality 50 = table as-is,
    quality 100 = all ones)."""
    if not (1 <= quality <= 100):
        raise ValueError("quality must lie in [1, 100]")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    table = np.floor((JPEG_LUMA_TABLE * scale + 50.0) / 100.0)
    return np.clip(table, 1.0, 255.0)


def intra_noise_array(arr: np.ndarray, quality: int) -> np.ndarray:
    """Blockwise DCT quantization of an (H, W, C) float array in [0, 1]."""
    h, w = arr.shape[:2]
    if h % DCT_BLOCK or w % DCT_BLOCK:
        raise ValueError(f"dims must be divisible by {DCT_BLOCK}, got {h}x{w}")
    table = quality_scaled_table(quality)
    v = arr.astype(np.float64) * 255.0 - 128.0
    bh, bw = h // DCT_BLOCK, w // DCT_BLOCK
    # (bh, bw, C, 8, 8) block view
    blocks = v.reshape(bh, DCT_BLOCK, bw, DCT_BLOCK, -1).transpose(0, 2, 4, 1, 3)
    coef = scipy.fft.dctn(blocks, axes=(-2, -1), norm="ortho")
    coef = _round_half_away(coef / table) * table
    rec = scipy.fft.idctn(coef, axes=(-2, -1), norm="ortho")
    out = rec.transpose(0, 3, 1, 4, 2).reshape(h, w, -1)
    return np.clip((out + 128.0) / 255.0, 0.0, 1.0).astype(np.float32)


def intra_noise(f: Frame, quality: int) -> Frame:
    return Frame(intra_noise_array(f.data, quality))


def _block_flow_variance(flow: np.ndarray) -> np.ndarray:
    """Per-macroblock total flow variance: var(u) + var(v) over the block."""
    h, w = flow.shape[:2]
    bh, bw = h // MACROBLOCK, w // MACROBLOCK
    blocks = flow[:bh * MACROBLOCK, :bw * MACROBLOCK]
    blocks = blocks.reshape(bh, MACROBLOCK, bw, MACROBLOCK, 2)
    return blocks.var(axis=(1, 3)).sum(axis=-1)


def inter_noise_array(arr: np.ndarray, flow: np.ndarray, spec: NoiseSpec,
                      rng: np.random.Generator) -> np.ndarray:
    """Macroblock jittering: with probability min(1, var/threshold) a 16x16
    block is replaced by its own content shifted by a uniform non-zero
    displacement in {-s..s}^2, with the source window clamped at the frame
    border. Untouched blocks are copied bit-for-bit."""
    h, w = arr.shape[:2]
    if flow.shape[:2] != (h, w):
        raise ValueError("flow dimensions must match the frame")
    out = arr.copy()
    var = _block_flow_variance(flow)
    s = spec.jitter_max_shift
    shifts = [(dx, dy)
              for dy in range(-s, s + 1) for dx in range(-s, s + 1)
              if (dx, dy) != (0, 0)]
    bh, bw = h // MACROBLOCK, w // MACROBLOCK
    for by in range(bh):
        for bx in range(bw):
            p = min(1.0, var[by, bx] / spec.jitter_threshold) \
                if spec.jitter_threshold > 0 else 1.0
            if rng.random() >= p:
                continue
            dx, dy = shifts[rng.integers(len(shifts))]
            y0, x0 = by * MACROBLOCK, bx * MACROBLOCK
            sy = int(np.clip(y0 + dy, 0, h - MACROBLOCK))
            sx = int(np.clip(x0 + dx, 0, w - MACROBLOCK))
            out[y0:y0 + MACROBLOCK, x0:x0 + MACROBLOCK] = \
                arr[sy:sy + MACROBLOCK, sx:sx + MACROBLOCK]
    return out


def inter_noise(f: Frame, flow: FlowField, spec: NoiseSpec,
                rng: np.random.Generator | None = None) -> Frame:
    if rng is None:
        rng = np.random.default_rng(spec.rng_seed)
    return Frame(inter_noise_array(f.data, flow.data, spec, rng))


def cns_plan(n_frames: int, spec: NoiseSpec,
             rng: np.random.Generator) -> list[tuple[str, int]]:
    """Draw the (mode, quality) schedule for one sequence.

    Frame 0 always receives intra noise (the I-frame); each later frame
    independently receives inter noise with ``spec.inter_prob``, else intra.
    A quality is drawn per frame whether or not it ends up used, keeping the
    stream layout stable.
    """
    plan = []
    for t in range(n_frames):
        quality = int(rng.integers(spec.quality_range[0], spec.quality_range[1] + 1))
        if t == 0 or rng.random() >= spec.inter_prob:
            plan.append(("intra", quality))
        else:
            plan.append(("inter", quality))
    return plan


def cns_apply(frames: list[Frame], flows: list[FlowField] | None,
              spec: NoiseSpec, rng: np.random.Generator | None = None) -> list[Frame]:
    """Apply codec-noise simulation over a frame sequence.

    Disabled spec returns the input unchanged (the no-CNS ablation). Inter
    noise needs a flow per transition; with flows absent, every frame falls
    back to intra noise.
    """
    if not spec.enabled:
        return list(frames)
    if flows is not None and len(flows) != len(frames) - 1:
        raise ValueError("flows must contain len(frames)-1 fields")
    if rng is None:
        rng = np.random.default_rng(spec.rng_seed)
    plan = cns_plan(len(frames), spec, rng)
    out = []
    for t, (mode, quality) in enumerate(plan):
        if mode == "inter" and flows is not None:
            out.append(inter_noise(frames[t], flows[t - 1], spec, rng))
        else:
            out.append(intra_noise(frames[t], quality))
    return out


class CnsLayer(torch.nn.Module):
    """Straight-through CNS over a batched frame sequence.

    Input: per-time-step tensors (B, 3, H, W) and flows (B, 2, H, W). The
    noise is computed out-of-graph and re-injected additively, so the
    gradient of the whole module is the identity, mirroring the quantization
    proxy.
    """

    def __init__(self, spec: NoiseSpec):
        super().__init__()
        self.spec = spec
        self.reset_rng()

    def reset_rng(self, seed: int | None = None):
        self.rng = np.random.default_rng(self.spec.rng_seed if seed is None else seed)

    def forward(self, seq: list[torch.Tensor],
                flows: list[torch.Tensor] | None) -> list[torch.Tensor]:
        if not self.spec.enabled:
            return list(seq)
        n_t = len(seq)
        batch = seq[0].shape[0]
        noised = [t.detach().clone() for t in seq]
        for b in range(batch):
            frames = [Frame(seq[t][b].detach().permute(1, 2, 0).numpy().copy())
                      for t in range(n_t)]
            fl = None
            if flows is not None:
                fl = [FlowField(flows[t][b].detach().permute(1, 2, 0).numpy().copy())
                      for t in range(n_t - 1)]
            for t, frame in enumerate(cns_apply(frames, fl, self.spec, self.rng)):
                noised[t][b] = torch.from_numpy(
                    np.ascontiguousarray(frame.data.transpose(2, 0, 1)))
        return [x + (n - x.detach()) for x, n in zip(seq, noised)]
