"""Hyper-parameters, training configuration, and the flat key=value config
file format.

Every scalar the training procedure fixes lives in :class:`HyperParams`;
run-level choices (mode, paths, noise knobs) live in :class:`TrainConfig`.
Config files may set any field of either dataclass by name; absent keys keep
their defaults and unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Union


@dataclass(frozen=True)
class HyperParams:
    """Loss weights, solver schedule, and batch geometry."""

    lambda1: float = 1.7          # invertibility term weight
    lambda2: float = 1.3          # temporal term weight
    alpha: float = 0.1            # gradient-difference weight in the mono term
    beta: float = 0.99            # right-view weight in the invertibility term
    gamma: float = 10.0           # right-view weight in the temporal term
    eps_charbonnier: float = 1e-6
    eps_temporal: float = 1e-3    # ratio stabilizer in the deviation metric
    n_seq: int = 4                # consecutive frames per training sample
    b_batch: int = 16             # sequences per mini-batch
    crop: int = 256               # square training crop, px
    lr_init: float = 1e-4
    plateau_factor: float = 3.33  # lr divisor on plateau
    epochs_image: int = 200
    epochs_video: int = 300

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v <= 0:
                raise ValueError(f"{f.name} must be positive, got {v}")
        if not (0.0 < self.beta < 1.0):
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")


@dataclass(frozen=True)
class TrainConfig:
    """One training run: mode, data locations, architecture and noise knobs."""

    mode: str = "video"                  # "image" | "video"
    cns_enabled: bool = True
    data_root: str = ""
    checkpoint_dir: str = "checkpoints"
    seed: int = 0
    max_epochs: int = 0                  # 0 = use HyperParams epoch count
    max_iters: int = 0                   # 0 = no iteration cap
    init_checkpoint: str = ""
    channels: tuple[int, int, int] = (64, 128, 192)
    res_blocks: int = 3
    plateau_patience: int = 10           # epochs without improvement before lr cut
    plateau_rel_threshold: float = 1e-4
    cns_jitter_threshold: float = 4.0    # flow variance (px^2) for certain jitter
    cns_jitter_max_shift: int = 2
    cns_quality_min: int = 30
    cns_quality_max: int = 70
    cns_inter_prob: float = 0.75

    def __post_init__(self):
        if self.mode not in ("image", "video"):
            raise ValueError(f"mode must be 'image' or 'video', got {self.mode!r}")
        if len(self.channels) != 3 or any(c <= 0 for c in self.channels):
            raise ValueError(f"channels must be three positive widths, got {self.channels}")
        if self.res_blocks < 1:
            raise ValueError("res_blocks must be >= 1")
        if not (1 <= self.cns_quality_min <= self.cns_quality_max <= 100):
            raise ValueError("cns quality range must satisfy 1 <= min <= max <= 100")


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "on": True,
               "false": False, "0": False, "no": False, "off": False}


def _parse_value(key: str, raw: str, typ) -> object:
    raw = raw.strip()
    try:
        if typ is bool:
            if raw.lower() not in _BOOL_WORDS:
                raise ValueError
            return _BOOL_WORDS[raw.lower()]
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is str:
            return raw
        if typ == tuple[int, int, int]:
            parts = [p for p in raw.replace(",", " ").split() if p]
            if len(parts) != 3:
                raise ValueError
            return tuple(int(p) for p in parts)
    except ValueError:
        raise ValueError(f"malformed value for key {key!r}: {raw!r}") from None
    raise ValueError(f"unsupported config field type for key {key!r}")


def _format_value(v: object) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def load_config(path: Union[str, Path]) -> tuple[HyperParams, TrainConfig]:
    """Read a key=value config file; absent keys fall back to defaults.

    Raises FileNotFoundError for a missing file and ValueError (naming the
    key) for malformed values or unknown keys.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")

    hp_fields = {f.name: f for f in fields(HyperParams)}
    tc_fields = {f.name: f for f in fields(TrainConfig)}
    hp_kwargs: dict = {}
    tc_kwargs: dict = {}

    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key in hp_fields:
            hp_kwargs[key] = _parse_value(key, raw, _field_type(HyperParams, key))
        elif key in tc_fields:
            tc_kwargs[key] = _parse_value(key, raw, _field_type(TrainConfig, key))
        else:
            raise ValueError(f"unknown config key {key!r} at {path}:{lineno}")

    return HyperParams(**hp_kwargs), TrainConfig(**tc_kwargs)


def _field_type(cls, name: str):
    # dataclass field .type may be a string under `from __future__ import annotations`
    import typing
    hints = typing.get_type_hints(cls)
    return hints[name]


def save_config(path: Union[str, Path], hp: HyperParams, tc: TrainConfig) -> None:
    """Write every field of both dataclasses as key=value lines."""
    lines = ["# monovid configuration"]
    for obj in (hp, tc):
        lines.append("")
        for f in fields(obj):
            lines.append(f"{f.name}={_format_value(getattr(obj, f.name))}")
    Path(path).write_text("\n".join(lines) + "\n")
