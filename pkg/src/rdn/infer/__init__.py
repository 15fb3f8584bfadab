"""Inference: sequence deblurring, tiling, multiscale, metrics, frame IO."""

from ..frames import load_frame, load_frames, save_frame, save_frames
from .metrics import psnr
from .run import InferConfig, Report, deblur_sequence, multiscale_infer, tile_infer

__all__ = [
    "InferConfig",
    "Report",
    "deblur_sequence",
    "load_frame",
    "load_frames",
    "multiscale_infer",
    "psnr",
    "save_frame",
    "save_frames",
    "tile_infer",
]
