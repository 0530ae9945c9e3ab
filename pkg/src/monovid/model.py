"""Encoder/decoder assembly and checkpoint format.

The encoder turns a stereo pair into one mononized frame: a shared-weight
extractor embeds both views, the fusion module joins the pyramids, and a
reconstructor renders the frame (optionally conditioned on the previous
step's fused pyramid). The decoder mirrors it: extract a pyramid from the
mononized frame, split it into left/right pyramids, and render both views
through one shared reconstructor.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import torch
import torch.nn as nn

from .backbone import ExtractorConfig, FeatureExtractor, FeaturePyramid, Reconstructor
from .pdf import PdfFuse, PdfSplit

FORMAT_VERSION = 1


class StereoEncoder(nn.Module):
    def __init__(self, cfg: ExtractorConfig):
        super().__init__()
        self.extractor = FeatureExtractor(cfg)  # one instance serves both views
        self.fuse = PdfFuse(cfg.channels_per_level)
        self.reconstructor = Reconstructor(cfg)

    def forward(self, i_left: torch.Tensor, i_right: torch.Tensor,
                prev_mono_pyr: Optional[FeaturePyramid] = None):
        p_left = self.extractor(i_left)
        p_right = self.extractor(i_right)
        p_mono = self.fuse(p_left, p_right)
        o_mono = self.reconstructor(p_mono, prev_mono_pyr)
        return o_mono, p_mono


class StereoDecoder(nn.Module):
    def __init__(self, cfg: ExtractorConfig):
        super().__init__()
        self.extractor = FeatureExtractor(cfg)
        self.split = PdfSplit(cfg.channels_per_level)
        self.reconstructor = Reconstructor(cfg)  # shared for left and right

    def forward(self, o_mono: torch.Tensor,
                prev_left_pyr: Optional[FeaturePyramid] = None,
                prev_right_pyr: Optional[FeaturePyramid] = None):
        p_mono = self.extractor(o_mono)
        p_left, p_right = self.split(p_mono)
        o_left = self.reconstructor(p_left, prev_left_pyr)
        o_right = self.reconstructor(p_right, prev_right_pyr)
        return o_left, o_right, p_left, p_right


class MononizerModel(nn.Module):
    """The trainable pair (encoder, decoder)."""

    def __init__(self, cfg: ExtractorConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = StereoEncoder(cfg)
        self.decoder = StereoDecoder(cfg)


@dataclass
class ModelState:
    """Checkpoint payload; encoder and decoder always travel together."""

    encoder_params: dict
    decoder_params: dict
    arch_config: ExtractorConfig
    format_version: int = FORMAT_VERSION


def model_to_state(model: MononizerModel) -> ModelState:
    return ModelState(
        encoder_params={k: v.detach().clone() for k, v in model.encoder.state_dict().items()},
        decoder_params={k: v.detach().clone() for k, v in model.decoder.state_dict().items()},
        arch_config=model.cfg,
    )


def model_from_state(state: ModelState) -> MononizerModel:
    model = MononizerModel(state.arch_config)
    model.encoder.load_state_dict(state.encoder_params)
    model.decoder.load_state_dict(state.decoder_params)
    return model


def save_checkpoint(path: Union[str, Path], model: MononizerModel,
                    extra: Optional[dict] = None) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "arch_config": {
            "channels_per_level": tuple(model.cfg.channels_per_level),
            "residual_blocks_per_level": model.cfg.residual_blocks_per_level,
            "kernel_size": model.cfg.kernel_size,
        },
        "encoder_params": model.encoder.state_dict(),
        "decoder_params": model.decoder.state_dict(),
    }
    if extra:
        payload["extra"] = extra
    torch.save(payload, str(path))


def load_checkpoint(path: Union[str, Path]) -> MononizerModel:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = torch.load(str(path), map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(
            f"checkpoint format version {version} unsupported (expected {FORMAT_VERSION})")
    arch = payload["arch_config"]
    cfg = ExtractorConfig(
        channels_per_level=tuple(arch["channels_per_level"]),
        residual_blocks_per_level=arch["residual_blocks_per_level"],
        kernel_size=arch["kernel_size"],
    )
    model = MononizerModel(cfg)
    model.encoder.load_state_dict(payload["encoder_params"])
    model.decoder.load_state_dict(payload["decoder_params"])
    return model
