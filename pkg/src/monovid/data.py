"""Dataset ingestion and batch sampling.

Datasets are directories of per-sequence folders, each holding numbered PNG
frames under ``left/`` and ``right/`` plus optional sibling ``flow_left/``
and ``flow_right/`` directories of Middlebury .flo files (one fewer than the
frames). Nothing here compiles datasets; it only ingests user-provided
sequences.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import cv2
import numpy as np
import torch

from .config import HyperParams
from .flowio import load_flo, write_flo
from .types import (Frame, FlowField, StereoClip, StereoFrame, VideoClip,
                    float_to_u8, u8_to_frame)


def read_frame(path: Union[str, Path]) -> Frame:
    """Load an 8-bit RGB PNG as a grid-aligned float frame."""
    bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if bgr is None:
        raise FileNotFoundError(f"cannot read image: {path}")
    return u8_to_frame(np.ascontiguousarray(bgr[:, :, ::-1]))


def write_frame(path: Union[str, Path], frame: Frame) -> None:
    u8 = float_to_u8(frame.data)
    if not cv2.imwrite(str(path), np.ascontiguousarray(u8[:, :, ::-1])):
        raise IOError(f"cannot write image: {path}")


def list_frames(directory: Union[str, Path]) -> list[Path]:
    return sorted(Path(directory).glob("*.png"))


def read_clip(directory: Union[str, Path], fps: float = 25.0) -> VideoClip:
    paths = list_frames(directory)
    if not paths:
        raise FileNotFoundError(f"no PNG frames in {directory}")
    return VideoClip(tuple(read_frame(p) for p in paths), fps=fps)


def write_clip(directory: Union[str, Path], clip: VideoClip) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(clip.frames):
        write_frame(directory / f"{i:04d}.png", frame)


@dataclass(frozen=True)
class SequenceEntry:
    left_dir: Path
    right_dir: Path
    flow_left_dir: Optional[Path]
    flow_right_dir: Optional[Path]
    frame_count: int

    @property
    def has_flows(self) -> bool:
        return self.flow_left_dir is not None and self.flow_right_dir is not None


@dataclass(frozen=True)
class DatasetIndex:
    sequences: tuple[SequenceEntry, ...]
    split: str = "train"

    def __post_init__(self):
        if not self.sequences:
            raise ValueError("dataset contains no sequences")


def scan_dataset(root: Union[str, Path], split: str = "train",
                 require_flows: bool = False) -> DatasetIndex:
    """Index every sequence directory under ``root``.

    A sequence directory contains ``left/`` and ``right/`` with equal PNG
    counts; flow directories, when present, must hold exactly one fewer .flo
    file than there are frames.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root not found: {root}")
    entries = []
    for seq_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        left, right = seq_dir / "left", seq_dir / "right"
        if not (left.is_dir() and right.is_dir()):
            continue
        n_left, n_right = len(list_frames(left)), len(list_frames(right))
        if n_left != n_right:
            raise ValueError(
                f"{seq_dir.name}: left has {n_left} frames but right has {n_right}")
        if n_left == 0:
            raise ValueError(f"{seq_dir.name}: no frames")
        fl, fr = seq_dir / "flow_left", seq_dir / "flow_right"
        has_flows = fl.is_dir() and fr.is_dir()
        if has_flows:
            for d in (fl, fr):
                n_flo = len(sorted(d.glob("*.flo")))
                if n_flo != n_left - 1:
                    raise ValueError(
                        f"{seq_dir.name}/{d.name}: {n_flo} flows for {n_left} frames")
        elif require_flows:
            raise ValueError(f"{seq_dir.name}: missing flow_left/flow_right "
                             f"directories (required for video mode)")
        entries.append(SequenceEntry(left, right,
                                     fl if has_flows else None,
                                     fr if has_flows else None, n_left))
    if not entries:
        raise ValueError(f"no sequences found under {root}")
    return DatasetIndex(tuple(entries), split=split)


def load_stereo_clip(entry: SequenceEntry, fps: float = 25.0,
                     with_flows: bool = True) -> StereoClip:
    lefts = [read_frame(p) for p in list_frames(entry.left_dir)]
    rights = [read_frame(p) for p in list_frames(entry.right_dir)]
    frames = tuple(StereoFrame(l, r) for l, r in zip(lefts, rights))
    flows_l = flows_r = None
    if with_flows and entry.has_flows:
        flows_l = tuple(load_flo(p) for p in sorted(entry.flow_left_dir.glob("*.flo")))
        flows_r = tuple(load_flo(p) for p in sorted(entry.flow_right_dir.glob("*.flo")))
    return StereoClip(frames, fps=fps, flows_left=flows_l, flows_right=flows_r)


def write_stereo_dataset(clip: StereoClip, root: Union[str, Path],
                         name: str = "seq000") -> Path:
    """Materialize a StereoClip in the on-disk dataset layout."""
    seq = Path(root) / name
    for sub in ("left", "right"):
        (seq / sub).mkdir(parents=True, exist_ok=True)
    for i, sf in enumerate(clip.frames):
        write_frame(seq / "left" / f"{i:04d}.png", sf.left)
        write_frame(seq / "right" / f"{i:04d}.png", sf.right)
    if clip.flows_left is not None and clip.flows_right is not None:
        for sub, flows in (("flow_left", clip.flows_left),
                           ("flow_right", clip.flows_right)):
            (seq / sub).mkdir(parents=True, exist_ok=True)
            for i, flow in enumerate(flows):
                write_flo(seq / sub / f"{i:04d}.flo", flow)
    return seq


@dataclass
class TrainBatch:
    """Tensors for one optimization step.

    ``left``/``right`` are (B, N, 3, H, W); flows are (B, N-1, 2, H, W) or
    None in image mode.
    """

    left: torch.Tensor
    right: torch.Tensor
    flows_left: Optional[torch.Tensor]
    flows_right: Optional[torch.Tensor]

    @property
    def batch(self) -> int:
        return self.left.shape[0]

    @property
    def steps(self) -> int:
        return self.left.shape[1]


def _to_chw(arr: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))


def sample_batch(index: DatasetIndex, hp: HyperParams,
                 rng: np.random.Generator, mode: str = "video",
                 batch_size: Optional[int] = None,
                 crop: Optional[int] = None) -> TrainBatch:
    """Draw B sequences x N consecutive stereo frames, each sequence under a
    single random crop window shared by its frames and flows. N is 1 in
    image mode."""
    n_seq = 1 if mode == "image" else hp.n_seq
    b = hp.b_batch if batch_size is None else batch_size
    crop = hp.crop if crop is None else crop
    if crop % 8:
        raise ValueError(f"crop must be a multiple of 8, got {crop}")

    lefts, rights, fls, frs = [], [], [], []
    for _ in range(b):
        entry = index.sequences[rng.integers(len(index.sequences))]
        if entry.frame_count < n_seq:
            raise ValueError(
                f"sequence {entry.left_dir.parent.name} has {entry.frame_count} "
                f"frames, need at least {n_seq}")
        t0 = int(rng.integers(entry.frame_count - n_seq + 1))
        left_paths = list_frames(entry.left_dir)[t0:t0 + n_seq]
        right_paths = list_frames(entry.right_dir)[t0:t0 + n_seq]
        frames_l = [read_frame(p).data for p in left_paths]
        frames_r = [read_frame(p).data for p in right_paths]
        h, w = frames_l[0].shape[:2]
        if crop > h or crop > w:
            raise ValueError(f"crop {crop} exceeds frame size {h}x{w}")
        y0 = int(rng.integers(h - crop + 1))
        x0 = int(rng.integers(w - crop + 1))
        sl = np.s_[y0:y0 + crop, x0:x0 + crop]
        lefts.append(torch.stack([_to_chw(f[sl]) for f in frames_l]))
        rights.append(torch.stack([_to_chw(f[sl]) for f in frames_r]))
        if mode == "video" and n_seq > 1:
            if not entry.has_flows:
                raise ValueError(
                    f"video mode needs flows; missing for "
                    f"{entry.left_dir.parent.name} (expected flow_left/flow_right)")
            flo_l = sorted(entry.flow_left_dir.glob("*.flo"))[t0:t0 + n_seq - 1]
            flo_r = sorted(entry.flow_right_dir.glob("*.flo"))[t0:t0 + n_seq - 1]
            fls.append(torch.stack([_to_chw(load_flo(p).data[sl]) for p in flo_l]))
            frs.append(torch.stack([_to_chw(load_flo(p).data[sl]) for p in flo_r]))

    flows_left = torch.stack(fls) if fls else None
    flows_right = torch.stack(frs) if frs else None
    return TrainBatch(torch.stack(lefts), torch.stack(rights), flows_left, flows_right)
