"""Checkpoint-driven deblurring of frame sequences.

All entry points take frames as float arrays (3, h, w) in [0, 1], nearest
observation first (frames[0] is the target), and return clamped predictions of
the input size. Sizes that are not multiples of 8 are reflect-padded on the
bottom/right before the network sees them and cropped back afterwards.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..model import DeblurState, RdnParams, deblur_block
from ..nn import Tensor, no_grad
from ..resample import area_downscale, resize_bilinear

__all__ = ["InferConfig", "Report", "deblur_sequence", "multiscale_infer", "tile_infer"]

# Conservative half-width of the network's spatial influence: three stride-2
# stages plus the residual stacks keep meaningful context within ~48 px.
RECEPTIVE_MARGIN = 48


@dataclass
class InferConfig:
    tile_size: int = 256
    overlap: int = 64
    margin: int = RECEPTIVE_MARGIN
    multiscale_levels: int = 1
    workers: int = 4
    # end-to-end run description, used by the CLI; the array-level entry
    # points below ignore these
    checkpoint: Path | None = None
    frames: list[Path] | None = None
    max_frames: int | None = None
    out_dir: Path | None = None

    def __post_init__(self) -> None:
        if self.tile_size % 8 or self.overlap % 8:
            raise ValueError("tile_size and overlap must be multiples of 8")
        if not 0 < self.overlap < self.tile_size:
            raise ValueError(f"need 0 < overlap < tile_size, got {self.overlap}/{self.tile_size}")
        if self.multiscale_levels not in (1, 2, 3):
            raise ValueError(f"multiscale_levels must be 1, 2 or 3, got {self.multiscale_levels}")
        if self.workers < 1:
            raise ValueError(f"workers must be positive, got {self.workers}")


@dataclass
class Report:
    steps: int
    psnr_per_frame: list[float] = field(default_factory=list)
    ms_per_step: list[float] = field(default_factory=list)


def _check_frames(frames: list[np.ndarray]) -> tuple[int, int]:
    if len(frames) < 2:
        raise ValueError(f"need at least 2 frames (target + one observation), got {len(frames)}")
    shape = frames[0].shape
    if len(shape) != 3 or shape[0] != 3:
        raise ValueError(f"frames must be (3, h, w), got {shape}")
    for i, f in enumerate(frames):
        if f.shape != shape:
            raise ValueError(f"frame {i} shape {f.shape} differs from frame 0 {shape}")
    return shape[1], shape[2]


def _pad_to_multiple(frame: np.ndarray, multiple: int = 8) -> tuple[np.ndarray, int, int]:
    h, w = frame.shape[-2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph or pw:
        frame = np.pad(frame, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    return frame, ph, pw


def deblur_sequence(
    frames: list[np.ndarray],
    params: RdnParams,
    k_steps: int | None = None,
    *,
    timings_ms: list[float] | None = None,
) -> list[np.ndarray]:
    """Iterate the deblur block over the observations; returns every step's
    prediction so oversharpening onset can be inspected.

    Pass a list as ``timings_ms`` to collect per-step wall-clock times.
    """
    h, w = _check_frames(frames)
    if k_steps is None:
        k_steps = len(frames) - 1
    if not 1 <= k_steps <= len(frames) - 1:
        raise ValueError(f"k_steps {k_steps} outside 1..{len(frames) - 1}")

    padded = [_pad_to_multiple(f.astype(np.float32, copy=False))[0] for f in frames]
    outputs: list[np.ndarray] = []
    with no_grad():
        state = DeblurState(Tensor(padded[0][None]), None, 0)
        for obs in padded[1 : k_steps + 1]:
            t0 = time.perf_counter()
            state = deblur_block(state, Tensor(obs[None]), params, mode="infer")
            pred = np.clip(state.prediction.data[0, :, :h, :w], 0.0, 1.0)
            if timings_ms is not None:
                timings_ms.append((time.perf_counter() - t0) * 1e3)
            outputs.append(pred.astype(np.float32))
    return outputs


def _feather_profile(length: int, overlap: int, ramp_lo: bool, ramp_hi: bool) -> np.ndarray:
    prof = np.ones(length)
    ramp = (np.arange(1, overlap + 1)) / (overlap + 1)
    if ramp_lo:
        prof[:overlap] = ramp
    if ramp_hi:
        prof[-overlap:] = ramp[::-1]
    return prof


def tile_infer(frames: list[np.ndarray], params: RdnParams, cfg: InferConfig) -> np.ndarray:
    """Deblur a large frame tile by tile and feather the seams linearly.

    Frames no larger than one tile take the untiled path unchanged. Tile
    origins stay multiples of 8 by construction (tile size, stride, and the
    padded frame size all are).
    """
    h, w = _check_frames(frames)
    if h <= cfg.tile_size and w <= cfg.tile_size:
        return deblur_sequence(frames, params)[-1]
    if cfg.overlap < cfg.margin:
        warnings.warn(
            f"overlap {cfg.overlap} below receptive-field margin {cfg.margin}; "
            "tile seams may show context truncation",
            stacklevel=2,
        )

    padded = [_pad_to_multiple(f)[0] for f in frames]
    ph, pw = padded[0].shape[-2:]
    stride = cfg.tile_size - cfg.overlap

    def origins(extent: int) -> list[int]:
        if extent <= cfg.tile_size:
            return [0]
        xs = list(range(0, extent - cfg.tile_size, stride))
        xs.append(extent - cfg.tile_size)  # multiple of 8: both terms are
        return sorted(set(xs))

    windows = [
        (slice(y0, y0 + min(cfg.tile_size, ph)), slice(x0, x0 + min(cfg.tile_size, pw)))
        for y0 in origins(ph)
        for x0 in origins(pw)
    ]

    def run_tile(window) -> np.ndarray:
        tile_frames = [np.ascontiguousarray(f[(...,) + window]) for f in padded]
        return deblur_sequence(tile_frames, params)[-1]

    # tiles are independent; stitch in window order so the result does not
    # depend on which worker finishes first
    if cfg.workers > 1 and len(windows) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            preds = list(pool.map(run_tile, windows))
    else:
        preds = [run_tile(w) for w in windows]

    acc = np.zeros((3, ph, pw))
    den = np.zeros((ph, pw))
    for window, pred in zip(windows, preds):
        y0, x0 = window[0].start, window[1].start
        th, tw = pred.shape[-2:]
        wy = _feather_profile(th, cfg.overlap, ramp_lo=y0 > 0, ramp_hi=y0 + th < ph)
        wx = _feather_profile(tw, cfg.overlap, ramp_lo=x0 > 0, ramp_hi=x0 + tw < pw)
        weight = wy[:, None] * wx[None, :]
        acc[(...,) + window] += weight * pred
        den[window] += weight
    out = acc / den
    return np.clip(out[:, :h, :w], 0.0, 1.0).astype(np.float32)


def multiscale_infer(frames: list[np.ndarray], params: RdnParams, levels: int) -> np.ndarray:
    """Coarse-to-fine: deblur at 1/2^(n-1), upscale the result, and feed it to
    the next finer level as one extra (final) observation."""
    h, w = _check_frames(frames)
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    if levels == 1:
        return deblur_sequence(frames, params)[-1]
    if min(h, w) // 2 ** (levels - 1) < 16:
        raise ValueError(f"frames {h}x{w} too small for {levels} pyramid levels")

    prediction: np.ndarray | None = None
    for level in range(levels - 1, -1, -1):
        factor = 2**level
        scaled = [area_downscale(f, factor).astype(np.float32) for f in frames]
        if prediction is not None:
            upscaled = resize_bilinear(prediction, scaled[0].shape[-2:])
            scaled.append(np.clip(upscaled, 0.0, 1.0).astype(np.float32))
        prediction = deblur_sequence(scaled, params)[-1]
    return prediction
