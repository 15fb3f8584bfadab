"""Camera-shake point spread functions from Gaussian-process trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

__all__ = ["PsfKernel", "apply_psf", "sample_psf"]

_TRAJECTORY_POINTS = 64
_LENGTH_SCALE = 0.3
_JITTER = 1e-10


@dataclass(frozen=True)
class PsfKernel:
    size: int
    weights: np.ndarray  # (size, size) float64, non-negative, sums to 1


def _trajectory(rng: np.random.Generator, points: int, length_scale: float) -> np.ndarray:
    """Sample a smooth 2-D path: one squared-exponential GP per axis."""
    t = np.linspace(0.0, 1.0, points)
    cov = np.exp(-0.5 * ((t[:, None] - t[None, :]) / length_scale) ** 2)
    cov[np.diag_indices_from(cov)] += _JITTER
    chol = np.linalg.cholesky(cov)
    return chol @ rng.standard_normal((points, 2))


def sample_psf(
    size: int,
    seed,
    *,
    shake_mag: float = 1.0,
    points: int = _TRAJECTORY_POINTS,
    length_scale: float = _LENGTH_SCALE,
) -> PsfKernel:
    """Draw a shake kernel: GP trajectory, centred, scaled, splatted, normalised.

    ``shake_mag`` scales the trajectory extent relative to the kernel support:
    1.0 lets the path reach the kernel border, 0.0 collapses it to the centre
    delta. Weights are uniform over time (1/points per sample) and splatted
    bilinearly, so sub-pixel motion shows up as fractional weight.
    """
    if size < 3 or size % 2 == 0:
        raise ValueError(f"kernel size must be an odd integer >= 3, got {size}")
    if shake_mag < 0:
        raise ValueError(f"shake magnitude must be non-negative, got {shake_mag}")
    rng = np.random.default_rng(seed)
    xy = _trajectory(rng, points, length_scale)
    xy -= xy.mean(axis=0)
    extent = np.abs(xy).max()
    half = shake_mag * (size - 1) / 2.0
    if extent > 1e-12:
        xy *= half / extent

    centre = size // 2
    px = np.clip(xy[:, 0] + centre, 0.0, size - 1.0)
    py = np.clip(xy[:, 1] + centre, 0.0, size - 1.0)
    ix = px.astype(np.intp)
    iy = py.astype(np.intp)
    fx = px - ix
    fy = py - iy

    # One spare row/column absorbs the zero-weight far corner of splats that
    # land exactly on the last pixel.
    buf = np.zeros((size + 1, size + 1))
    w = 1.0 / points
    np.add.at(buf, (iy, ix), w * (1 - fy) * (1 - fx))
    np.add.at(buf, (iy, ix + 1), w * (1 - fy) * fx)
    np.add.at(buf, (iy + 1, ix), w * fy * (1 - fx))
    np.add.at(buf, (iy + 1, ix + 1), w * fy * fx)
    weights = buf[:size, :size]
    weights /= weights.sum()
    return PsfKernel(size, weights)


def apply_psf(frame: np.ndarray, kernel: PsfKernel) -> np.ndarray:
    """Convolve each channel with the kernel; borders reflect (edge included)."""
    taps = kernel.weights
    if frame.ndim == 2:
        return ndimage.convolve(frame.astype(np.float64), taps, mode="reflect").astype(frame.dtype)
    if frame.ndim == 3:
        out = np.stack(
            [ndimage.convolve(ch.astype(np.float64), taps, mode="reflect") for ch in frame]
        )
        return out.astype(frame.dtype)
    raise ValueError(f"expected (h, w) or (c, h, w) frame, got shape {frame.shape}")
