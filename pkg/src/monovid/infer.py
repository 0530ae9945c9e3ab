"""Clip-level inference: mononize a stereo clip into a standard 8-bit
monocular clip, and restore a stereo clip from a (possibly codec-degraded)
monocular clip.

Both directions thread the recurrent pyramids across frames and are
stateless between calls. Inputs whose dimensions are not multiples of 4 are
edge-padded for the network and cropped back on output.
"""

from __future__ import annotations

import logging

import numpy as np
import torch

from .degrade import quantize_tensor
from .model import MononizerModel
from .types import (Frame, StereoClip, StereoFrame, VideoClip, float_to_u8,
                    pad_to_multiple, u8_to_frame)

log = logging.getLogger("monovid")


def _frame_to_tensor(frame: Frame) -> tuple[torch.Tensor, tuple[int, int]]:
    data, pad = pad_to_multiple(frame.data, 4)
    if pad != (0, 0):
        log.info("padding frame from %dx%d by %s for the pyramid",
                 frame.height, frame.width, pad)
    t = torch.from_numpy(np.ascontiguousarray(data.transpose(2, 0, 1)))
    return t.unsqueeze(0), pad


def _tensor_to_frame(t: torch.Tensor, pad: tuple[int, int],
                     u8_grid: bool) -> Frame:
    arr = t.squeeze(0).permute(1, 2, 0).numpy()
    if pad != (0, 0):
        h, w = arr.shape[:2]
        arr = arr[:h - pad[0], :w - pad[1]]
    arr = np.clip(arr, 0.0, 1.0)
    if u8_grid:
        return u8_to_frame(float_to_u8(arr))
    return Frame(arr.copy())


@torch.no_grad()
def mononize_clip(model: MononizerModel, clip: StereoClip) -> VideoClip:
    """Encode each stereo frame into one 8-bit monocular frame."""
    model.eval()
    out = []
    prev_pm = None
    for sf in clip.frames:
        t_l, pad = _frame_to_tensor(sf.left)
        t_r, _ = _frame_to_tensor(sf.right)
        o_m, p_m = model.encoder(t_l, t_r, prev_pm)
        o_m = quantize_tensor(o_m)
        prev_pm = p_m
        out.append(_tensor_to_frame(o_m, pad, u8_grid=True))
    return VideoClip(tuple(out), fps=clip.fps)


@torch.no_grad()
def restore_clip(model: MononizerModel, mono: VideoClip) -> StereoClip:
    """Decode a mononized clip back into a stereo clip.

    Frames off the 1/255 grid are quantized first; arbitrary monocular clips
    decode without error (the output is simply not meaningful).
    """
    model.eval()
    frames = []
    prev_pl = prev_pr = None
    for frame in mono.frames:
        t_m, pad = _frame_to_tensor(frame)
        if not frame.u8_grid:
            t_m = quantize_tensor(t_m)
        o_l, o_r, p_l, p_r = model.decoder(t_m, prev_pl, prev_pr)
        prev_pl, prev_pr = p_l, p_r
        frames.append(StereoFrame(_tensor_to_frame(o_l, pad, u8_grid=False),
                                  _tensor_to_frame(o_r, pad, u8_grid=False)))
    return StereoClip(tuple(frames), fps=mono.fps)
