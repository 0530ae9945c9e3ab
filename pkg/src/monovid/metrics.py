"""Frame-quality and temporal-coherence measurement.

PSNR/SSIM/MS-SSIM follow the standard formulations (8-bit peak, 11x11
Gaussian window with sigma 1.5, canonical five-scale weights). Temporal
coherence is measured as per-frame warping deviation against the source
stream: sigma values near one mean the generated stream is as predictable
from its own past (under the source flows) as the source itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.ndimage import correlate1d

from .flowio import warp_array
from .types import FlowField, Frame, VideoClip, float_to_u8

PSNR_CAP_DB = 99.0
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_WIN = 11
_SIGMA = 1.5
_K1, _K2 = 0.01, 0.03


def _as_frames(stream: Union[VideoClip, Sequence[Frame]]) -> list[Frame]:
    return list(stream.frames) if isinstance(stream, VideoClip) else list(stream)


def psnr(a: Frame, b: Frame) -> float:
    """Peak signal-to-noise ratio in dB, computed on 8-bit grid values with
    peak 255; identical frames report the 99 dB cap."""
    if a.data.shape != b.data.shape:
        raise ValueError("frame dimensions must match")
    ua = float_to_u8(a.data).astype(np.float64)
    ub = float_to_u8(b.data).astype(np.float64)
    mse = np.mean((ua - ub) ** 2)
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(255.0 ** 2 / mse))


def _gaussian_window(n: int = _WIN, sigma: float = _SIGMA) -> np.ndarray:
    xs = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
    w = np.exp(-(xs ** 2) / (2.0 * sigma ** 2))
    return w / w.sum()


def _filter_valid(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Separable correlation with border crop to the valid region."""
    half = len(window) // 2
    out = correlate1d(img, window, axis=0, mode="constant")
    out = correlate1d(out, window, axis=1, mode="constant")
    return out[half:-half, half:-half]


def _ssim_components(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel (luminance, contrast*structure) maps for one channel pair."""
    win = _gaussian_window()
    c1 = _K1 ** 2
    c2 = _K2 ** 2
    mu_a = _filter_valid(a, win)
    mu_b = _filter_valid(b, win)
    var_a = _filter_valid(a * a, win) - mu_a ** 2
    var_b = _filter_valid(b * b, win) - mu_b ** 2
    cov = _filter_valid(a * b, win) - mu_a * mu_b
    lum = (2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)
    cs = (2 * cov + c2) / (var_a + var_b + c2)
    return lum, cs


def _check_dims(a: Frame, b: Frame, min_side: int, what: str) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError("frame dimensions must match")
    if min(a.height, a.width) < min_side:
        raise ValueError(f"{what} needs frames of at least {min_side}px per side, "
                         f"got {a.height}x{a.width}")


def ssim(a: Frame, b: Frame) -> float:
    """Structural similarity, mean over channels; identical frames give 1.0."""
    _check_dims(a, b, _WIN, "ssim")
    vals = []
    for c in range(3):
        lum, cs = _ssim_components(a.data[..., c].astype(np.float64),
                                   b.data[..., c].astype(np.float64))
        vals.append(np.mean(lum * cs))
    return float(np.mean(vals))


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    img = img[:h - h % 2, :w - w % 2]
    return (img[0::2, 0::2] + img[0::2, 1::2] + img[1::2, 0::2] + img[1::2, 1::2]) / 4.0


def ms_ssim(a: Frame, b: Frame, scales: int = 5,
            weights: Optional[Sequence[float]] = None) -> float:
    """Multi-scale SSIM with the canonical five-scale weights.

    Frames must be large enough to survive ``scales - 1`` dyadic
    downsamplings and still fit the 11x11 window (>= 176px per side at the
    default five scales). Fewer scales renormalize the canonical weight
    prefix.
    """
    if not (1 <= scales <= 5):
        raise ValueError("scales must lie in 1..5")
    if weights is None:
        prefix = np.array(MSSSIM_WEIGHTS[:scales])
        weights = prefix / prefix.sum()
    weights = np.asarray(weights, dtype=np.float64)
    _check_dims(a, b, _WIN * 2 ** (scales - 1), f"ms_ssim with {scales} scales")

    per_channel = []
    for c in range(3):
        xa = a.data[..., c].astype(np.float64)
        xb = b.data[..., c].astype(np.float64)
        mcs = []
        val = None
        for s in range(scales):
            lum, cs = _ssim_components(xa, xb)
            if s < scales - 1:
                mcs.append(max(np.mean(cs), 0.0))
                xa, xb = _downsample2(xa), _downsample2(xb)
            else:
                val = max(np.mean(lum * cs), 0.0)
        score = val ** weights[-1]
        for m, w in zip(mcs, weights[:-1]):
            score *= m ** w
        per_channel.append(score)
    return float(np.mean(per_channel))


def warping_deviation(prev: Frame, cur: Frame, flow: FlowField) -> np.ndarray:
    """Per-pixel |warp(prev, flow) - cur| in [0, 1] units."""
    if prev.data.shape != cur.data.shape:
        raise ValueError("frame dimensions must match")
    return np.abs(warp_array(prev.data, flow.data) - cur.data)


@dataclass(frozen=True)
class TemporalReport:
    """Per-transition deviation ratios and their geometric mean."""

    sigmas: tuple[float, ...]
    geometric_mean: float
    stream_id: str = ""

    def to_dict(self) -> dict:
        return {"stream_id": self.stream_id, "sigmas": list(self.sigmas),
                "geometric_mean": self.geometric_mean}


def geometric_mean(values: Sequence[float]) -> float:
    arr = np.asarray(values, dtype=np.float64)
    if np.any(arr <= 0):
        raise ValueError("geometric mean requires positive values")
    return float(np.exp(np.mean(np.log(arr))))


def temporal_deviation(gen_stream: Union[VideoClip, Sequence[Frame]],
                       ref_stream: Union[VideoClip, Sequence[Frame]],
                       flows: Sequence[FlowField],
                       eps: float = 1e-3,
                       stream_id: str = "") -> TemporalReport:
    """Ratio of the generated stream's warping deviation to the reference
    stream's, aggregated as a geometric mean over pixels and channels (in log
    space) per transition, then over transitions.

    ``eps`` stabilizes both numerator and denominator, so a stream measured
    against itself yields exactly 1. Flows must come from the reference
    (source) stream.
    """
    gen = _as_frames(gen_stream)
    ref = _as_frames(ref_stream)
    if len(gen) != len(ref):
        raise ValueError(f"stream lengths differ: {len(gen)} vs {len(ref)}")
    if len(flows) != len(gen) - 1:
        raise ValueError("need one flow per frame transition")
    if eps <= 0:
        raise ValueError("eps must be positive")
    sigmas = []
    for t in range(1, len(gen)):
        delta_gen = warping_deviation(gen[t - 1], gen[t], flows[t - 1])
        delta_ref = warping_deviation(ref[t - 1], ref[t], flows[t - 1])
        log_ratio = np.log((delta_gen.astype(np.float64) + eps)
                           / (delta_ref.astype(np.float64) + eps))
        sigmas.append(float(np.exp(log_ratio.mean())))
    return TemporalReport(tuple(sigmas), geometric_mean(sigmas), stream_id)


def diff_map(a: Frame, b: Frame, scale: float = 100.0) -> tuple[Frame, float]:
    """Scaled absolute difference image plus the mean absolute difference on
    the 0-255 scale."""
    if a.data.shape != b.data.shape:
        raise ValueError("frame dimensions must match")
    diff = np.abs(a.data.astype(np.float64) - b.data.astype(np.float64))
    image = Frame(np.clip(scale * diff, 0.0, 1.0).astype(np.float32))
    return image, float(diff.mean() * 255.0)


def write_temporal_json(path: Union[str, Path],
                        reports: Sequence[TemporalReport]) -> None:
    Path(path).write_text(
        json.dumps([r.to_dict() for r in reports], indent=2))
