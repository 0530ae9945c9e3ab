"""monovid: invertible stereo-to-mono video conversion.

Encode a binocular clip into a single standard 8-bit monocular clip that
looks like the left view, then restore both views from it. Includes the
self-supervised training pipeline, codec-noise-robust training, temporal
coherence metrics, and a rate-distortion harness over external codecs.
"""

from .backbone import ExtractorConfig, FeaturePyramid
from .config import HyperParams, TrainConfig, load_config, save_config
from .degrade import NoiseSpec, quantize_tensor
from .infer import mononize_clip, restore_clip
from .model import MononizerModel, load_checkpoint, save_checkpoint
from .types import (Frame, FlowField, RDPoint, StereoClip, StereoFrame,
                    VideoClip, frame_to_u8, u8_to_frame)

__version__ = "0.1.0"

__all__ = [
    "ExtractorConfig", "FeaturePyramid", "HyperParams", "TrainConfig",
    "load_config", "save_config", "NoiseSpec", "quantize_tensor",
    "mononize_clip", "restore_clip", "MononizerModel", "load_checkpoint",
    "save_checkpoint", "Frame", "FlowField", "RDPoint", "StereoClip",
    "StereoFrame", "VideoClip", "frame_to_u8", "u8_to_frame", "__version__",
]
