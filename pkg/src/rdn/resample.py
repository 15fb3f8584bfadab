"""Image resampling primitives shared by the data forge and inference.

All functions take channel-first arrays ``(..., h, w)`` and are pure. The
bilinear kernel is written in anchored form (``a + f*(b - a)``) so sampling at
exact integer coordinates reproduces stored pixel values bit-for-bit — several
static-scene identities downstream rely on that.
"""

from __future__ import annotations

import numpy as np

__all__ = ["area_downscale", "bilinear_sample", "resize_bilinear"]


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``img`` at float coordinates, clamping out-of-range to the edge.

    ``xs``/``ys`` share a shape S; the result has shape ``img.shape[:-2] + S``.
    """
    h, w = img.shape[-2:]
    xs = np.clip(xs, 0.0, float(w - 1))
    ys = np.clip(ys, 0.0, float(h - 1))
    x0 = xs.astype(np.intp)
    y0 = ys.astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    v00 = img[..., y0, x0]
    v01 = img[..., y0, x1]
    v10 = img[..., y1, x0]
    v11 = img[..., y1, x1]
    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    return top + fy * (bot - top)


def area_downscale(img: np.ndarray, factor: int) -> np.ndarray:
    """Downscale by an integer factor via block averaging.

    Trailing rows/columns that do not fill a complete block are dropped.
    """
    if factor < 1 or int(factor) != factor:
        raise ValueError(f"downscale factor must be a positive integer, got {factor!r}")
    if factor == 1:
        return img
    h, w = img.shape[-2:]
    oh, ow = h // factor, w // factor
    if oh == 0 or ow == 0:
        raise ValueError(f"image {h}x{w} too small for downscale factor {factor}")
    lead = img.shape[:-2]
    blocks = img[..., : oh * factor, : ow * factor].reshape(lead + (oh, factor, ow, factor))
    return blocks.mean(axis=(-3, -1))


def resize_bilinear(img: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Resize to ``(oh, ow)`` with bilinear sampling at half-pixel centres."""
    oh, ow = out_hw
    if oh < 1 or ow < 1:
        raise ValueError(f"target size must be positive, got {out_hw!r}")
    h, w = img.shape[-2:]
    xs = (np.arange(ow, dtype=np.float64) + 0.5) * (w / ow) - 0.5
    ys = (np.arange(oh, dtype=np.float64) + 0.5) * (h / oh) - 0.5
    gx, gy = np.meshgrid(xs, ys)
    return bilinear_sample(img, gx, gy)
