"""Optical-flow file I/O, the backward warping operator, and the hook for an
external flow estimator.

Flows come precomputed (Middlebury .flo files) or from a user-supplied
estimator command; nothing in this package estimates flow itself. Warping is
bilinear with clamp-to-edge sampling, and gradients (in the torch variant)
flow only through the image argument.
"""

from __future__ import annotations

import struct
import subprocess
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import torch

from .types import FlowField, Frame, VideoClip, float_to_u8

FLO_MAGIC = 202021.25


def load_flo(path: Union[str, Path]) -> FlowField:
    """Read a little-endian Middlebury .flo file."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12:
        raise ValueError(f"truncated .flo file: {path}")
    magic = struct.unpack("<f", raw[0:4])[0]
    if magic != np.float32(FLO_MAGIC):
        raise ValueError(f"bad magic in .flo file {path}: {magic!r}")
    width, height = struct.unpack("<ii", raw[4:12])
    if width <= 0 or height <= 0:
        raise ValueError(f"invalid .flo dimensions {width}x{height} in {path}")
    expected = 12 + 8 * width * height
    if len(raw) < expected:
        raise ValueError(f"truncated .flo file {path}: {len(raw)} < {expected} bytes")
    data = np.frombuffer(raw, dtype="<f4", count=2 * width * height, offset=12)
    return FlowField(data.reshape(height, width, 2).copy())


def write_flo(path: Union[str, Path], flow: FlowField) -> None:
    """Write a little-endian Middlebury .flo file (bit-exact round-trip)."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLO_MAGIC))
        fh.write(struct.pack("<ii", flow.width, flow.height))
        fh.write(np.ascontiguousarray(flow.data, dtype="<f4").tobytes())


def warp(frame: Frame, flow: FlowField) -> Frame:
    """Backward-warp: output(x, y) samples ``frame`` at (x+u, y+v), bilinear,
    with sample coordinates clamped to the frame border."""
    if (frame.height, frame.width) != (flow.height, flow.width):
        raise ValueError("frame and flow dimensions must match")
    warped = warp_array(frame.data, flow.data)
    return Frame(warped)


def warp_array(image: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Backward-warp an (H, W, C) array by an (H, W, 2) flow."""
    h, w = image.shape[:2]
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    sx = np.clip(xs + flow[..., 0], 0.0, w - 1.0)
    sy = np.clip(ys + flow[..., 1], 0.0, h - 1.0)

    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]

    img = image.astype(np.float64)
    out = (img[y0, x0] * (1 - fx) * (1 - fy)
           + img[y0, x1] * fx * (1 - fy)
           + img[y1, x0] * (1 - fx) * fy
           + img[y1, x1] * fx * fy)
    return out.astype(image.dtype if image.dtype == np.float64 else np.float32)


def warp_tensor(image: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Backward-warp a (B, C, H, W) tensor by a (B, 2, H, W) flow.

    The flow is treated as a constant (detached); gradients reach only the
    image argument. Matches :func:`warp_array` semantics.
    """
    if image.shape[-2:] != flow.shape[-2:]:
        raise ValueError("image and flow dimensions must match")
    b, _, h, w = image.shape
    flow = flow.detach().to(image.dtype)
    ys, xs = torch.meshgrid(torch.arange(h, dtype=image.dtype, device=image.device),
                            torch.arange(w, dtype=image.dtype, device=image.device),
                            indexing="ij")
    sx = (xs + flow[:, 0]).clamp(0, w - 1)
    sy = (ys + flow[:, 1]).clamp(0, h - 1)
    # normalized grid for align_corners=True sampling at pixel centers
    gx = 2.0 * sx / max(w - 1, 1) - 1.0
    gy = 2.0 * sy / max(h - 1, 1) - 1.0
    grid = torch.stack([gx, gy], dim=-1)
    return torch.nn.functional.grid_sample(image, grid, mode="bilinear",
                                           padding_mode="border", align_corners=True)


def estimate_flows(clip: VideoClip, estimator_cmd: str,
                   cache_dir: Union[str, Path]) -> list[FlowField]:
    """Run an external flow estimator over consecutive frame pairs.

    ``estimator_cmd`` is a shell command template with ``{prev}``, ``{next}``
    and ``{out}`` placeholders (two input image paths, one output .flo path).
    Results are cached in ``cache_dir``; a cached .flo newer than both frames
    is reused without invoking the command.
    """
    for ph in ("{prev}", "{next}", "{out}"):
        if ph not in estimator_cmd:
            raise ValueError(f"estimator command must contain {ph}")
    import cv2

    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    frame_paths = []
    for i, frame in enumerate(clip.frames):
        p = cache_dir / f"frame_{i:04d}.png"
        if not p.exists():
            cv2.imwrite(str(p), float_to_u8(frame.data)[:, :, ::-1])
        frame_paths.append(p)

    flows = []
    for i in range(len(clip) - 1):
        out = cache_dir / f"flow_{i:04d}.flo"
        prev_p, next_p = frame_paths[i], frame_paths[i + 1]
        fresh = (out.exists()
                 and out.stat().st_mtime >= prev_p.stat().st_mtime
                 and out.stat().st_mtime >= next_p.stat().st_mtime)
        if not fresh:
            cmd = estimator_cmd.format(prev=prev_p, next=next_p, out=out)
            proc = subprocess.run(cmd, shell=True, capture_output=True, text=True)
            if proc.returncode != 0:
                raise RuntimeError(
                    f"flow estimator failed (exit {proc.returncode}) for pair {i}:\n"
                    f"{proc.stdout}\n{proc.stderr}")
            if not out.exists():
                raise RuntimeError(f"flow estimator produced no output file: {out}")
        flows.append(load_flo(out))
    return flows
