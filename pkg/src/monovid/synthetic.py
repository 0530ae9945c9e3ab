"""Procedural stereo clips for smoke tests and toy-scale experiments.

Frames are band-limited noise textures; the right view is the left view
shifted by a constant horizontal disparity, and motion is generated by
warping each frame out of the previous one with a smooth flow field. The
flows used for generation double as exact ground-truth flows, so the clips
need no external estimator.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .flowio import warp_array
from .types import FlowField, Frame, StereoClip, StereoFrame, float_to_u8, u8_to_frame


def toy_texture(height: int, width: int, seed: int = 0,
                smoothness: float = 1.5) -> np.ndarray:
    """Smooth random RGB texture in [0, 1] with mid-frequency detail."""
    rng = np.random.default_rng(seed)
    tex = rng.random((height, width, 3)).astype(np.float32)
    for c in range(3):
        tex[..., c] = gaussian_filter(tex[..., c], smoothness)
    lo, hi = tex.min(), tex.max()
    tex = (tex - lo) / max(hi - lo, 1e-8)
    # keep a margin from 0/1 so warping and noise stay in range
    return (0.05 + 0.9 * tex).astype(np.float32)


def _motion_field(height: int, width: int, t: int,
                  translation=(0.8, 0.35), swirl: float = 0.15) -> np.ndarray:
    """Smooth per-frame flow: global translation plus a gentle rotational
    component, slightly varying over time."""
    ys, xs = np.meshgrid(np.linspace(-1, 1, height), np.linspace(-1, 1, width),
                         indexing="ij")
    phase = 1.0 + 0.1 * np.sin(0.7 * t)
    u = translation[0] * phase + swirl * (-ys)
    v = translation[1] * phase + swirl * (xs)
    return np.stack([u, v], axis=-1).astype(np.float32)


def toy_stereo_clip(n_frames: int = 8, size: int = 128, disparity: float = 4.0,
                    seed: int = 0, fps: float = 25.0) -> StereoClip:
    """Synthesize a stereo clip with exact flows.

    Frame t is the backward warp of frame t-1 under a smooth flow shared by
    both views; the right view is the left view sampled ``disparity`` pixels
    to the right. All frames are snapped to the 8-bit grid, as a stored
    dataset would be.
    """
    margin = int(np.ceil(disparity)) + 4
    tex = toy_texture(size + 8, size + margin + 8, seed=seed)
    shift = np.zeros(tex.shape[:2] + (2,), dtype=np.float32)
    shift[..., 0] = disparity
    shifted = warp_array(tex, shift)  # shifted(x) = tex(x + disparity)
    left = tex[4:4 + size, 4:4 + size].copy()
    right = shifted[4:4 + size, 4:4 + size].copy()

    frames = []
    flows = []
    cur_l, cur_r = left, right
    frames.append(StereoFrame(u8_to_frame(float_to_u8(cur_l)),
                              u8_to_frame(float_to_u8(cur_r))))
    for t in range(1, n_frames):
        flow = _motion_field(size, size, t)
        cur_l = warp_array(cur_l, flow)
        cur_r = warp_array(cur_r, flow)
        frames.append(StereoFrame(u8_to_frame(float_to_u8(cur_l)),
                                  u8_to_frame(float_to_u8(cur_r))))
        flows.append(FlowField(flow))

    flows = tuple(flows)
    return StereoClip(tuple(frames), fps=fps, flows_left=flows, flows_right=flows)
