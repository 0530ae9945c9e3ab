"""Core value objects shared across the pipeline.

Frames carry float32 RGB data in [0, 1]; conversion to the 8-bit grid
happens only at the quantization layer and at file I/O boundaries.
All types are immutable after construction and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

U8_SCALE = 255.0


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


@dataclass(frozen=True)
class Frame:
    """One RGB frame; ``data`` is (H, W, 3) float32 in [0, 1].

    ``u8_grid`` marks frames whose values sit exactly on the 1/255 grid
    (post-quantization or loaded from 8-bit files).
    """

    data: np.ndarray
    u8_grid: bool = False

    def __post_init__(self):
        d = self.data
        _require(isinstance(d, np.ndarray) and d.ndim == 3 and d.shape[2] == 3,
                 f"frame data must be (H, W, 3), got {getattr(d, 'shape', None)}")
        if d.dtype != np.float32:
            object.__setattr__(self, "data", d.astype(np.float32))
            d = self.data
        _require(bool(np.isfinite(d).all()), "frame data must be finite")
        d.setflags(write=False)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class StereoFrame:
    left: Frame
    right: Frame

    def __post_init__(self):
        _require(self.left.data.shape == self.right.data.shape,
                 "left/right frames must share dimensions")

    @property
    def height(self) -> int:
        return self.left.height

    @property
    def width(self) -> int:
        return self.left.width


@dataclass(frozen=True)
class FlowField:
    """Dense backward-warp motion, (H, W, 2) float32, (u, v) in pixels,
    mapping frame t-1 onto frame t."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        _require(isinstance(d, np.ndarray) and d.ndim == 3 and d.shape[2] == 2,
                 f"flow data must be (H, W, 2), got {getattr(d, 'shape', None)}")
        if d.dtype != np.float32:
            object.__setattr__(self, "data", d.astype(np.float32))
            d = self.data
        _require(bool(np.isfinite(d).all()), "flow data must be finite")
        d.setflags(write=False)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class VideoClip:
    frames: tuple[Frame, ...]
    fps: float = 25.0

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        _require(len(self.frames) > 0, "clip must contain at least one frame")
        h, w = self.frames[0].height, self.frames[0].width
        _require(all(f.height == h and f.width == w for f in self.frames),
                 "all frames in a clip must share dimensions")
        _require(self.fps > 0, "fps must be positive")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def width(self) -> int:
        return self.frames[0].width


@dataclass(frozen=True)
class StereoClip:
    frames: tuple[StereoFrame, ...]
    fps: float = 25.0
    flows_left: Optional[tuple[FlowField, ...]] = None
    flows_right: Optional[tuple[FlowField, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        _require(len(self.frames) > 0, "clip must contain at least one frame")
        h, w = self.frames[0].height, self.frames[0].width
        _require(all(f.height == h and f.width == w for f in self.frames),
                 "all frames in a clip must share dimensions")
        _require(self.fps > 0, "fps must be positive")
        for name in ("flows_left", "flows_right"):
            flows = getattr(self, name)
            if flows is None:
                continue
            flows = tuple(flows)
            object.__setattr__(self, name, flows)
            _require(len(flows) == len(self.frames) - 1,
                     f"{name} must contain len(frames)-1 fields")
            _require(all(fl.height == h and fl.width == w for fl in flows),
                     f"{name} dimensions must match the frames")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def width(self) -> int:
        return self.frames[0].width

    def left_clip(self) -> VideoClip:
        return VideoClip(tuple(sf.left for sf in self.frames), self.fps)

    def right_clip(self) -> VideoClip:
        return VideoClip(tuple(sf.right for sf in self.frames), self.fps)


@dataclass(frozen=True)
class RDPoint:
    """One point on a rate-distortion curve."""

    bitrate_mbps: float
    quality: float  # MS-SSIM
    codec_id: str
    stream_kind: str  # "mononized" | "side-by-side"

    def __post_init__(self):
        _require(self.bitrate_mbps > 0, "bitrate must be positive")
        _require(0.0 <= self.quality <= 1.0, "quality must be in [0, 1]")
        _require(self.stream_kind in ("mononized", "side-by-side"),
                 f"unknown stream kind {self.stream_kind!r}")


def frame_to_u8(f: Frame) -> np.ndarray:
    """Convert to (H, W, 3) uint8. Values are clamped to [0, 1] and rounded
    half away from zero."""
    return float_to_u8(f.data)


def u8_to_frame(arr: np.ndarray) -> Frame:
    """Wrap a (H, W, 3) uint8 array as a float frame on the 1/255 grid."""
    _require(arr.dtype == np.uint8, "expected uint8 input")
    return Frame((arr.astype(np.float32) / U8_SCALE), u8_grid=True)


def float_to_u8(data: np.ndarray) -> np.ndarray:
    clipped = np.clip(data, 0.0, 1.0)
    return np.floor(clipped * U8_SCALE + 0.5).astype(np.uint8)


def snap_to_u8_grid(f: Frame) -> Frame:
    """Round a float frame onto the 1/255 grid (idempotent)."""
    if f.u8_grid:
        return f
    return u8_to_frame(float_to_u8(f.data))


def pad_to_multiple(data: np.ndarray, multiple: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Edge-replicate pad H and W up to the next multiple; returns the padded
    array and the (pad_h, pad_w) applied at the bottom/right."""
    h, w = data.shape[:2]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return data, (0, 0)
    pad = [(0, ph), (0, pw)] + [(0, 0)] * (data.ndim - 2)
    return np.pad(data, pad, mode="edge"), (ph, pw)
