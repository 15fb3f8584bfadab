"""Synthetic blur data generation: flow, warping, averaging, PSFs, corpus IO."""

from .blur import average_blur, sharpness_score
from .flow import FlowField, estimate_flow
from .forge import (
    ForgeConfig,
    SubframeSpec,
    TrainingSample,
    forge_corpus,
    list_samples,
    load_sample,
    make_samples,
    save_sample,
)
from .psf import PsfKernel, apply_psf, sample_psf
from .warp import synth_subframe, warp_bilinear

__all__ = [
    "FlowField",
    "ForgeConfig",
    "PsfKernel",
    "SubframeSpec",
    "TrainingSample",
    "apply_psf",
    "average_blur",
    "estimate_flow",
    "forge_corpus",
    "list_samples",
    "load_sample",
    "make_samples",
    "sample_psf",
    "save_sample",
    "sharpness_score",
    "synth_subframe",
    "warp_bilinear",
]
