"""Temporal averaging into blurry frames, and the sharpness gate."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import ndimage

__all__ = ["average_blur", "sharpness_score"]


def average_blur(
    f_t: np.ndarray,
    preceding: Sequence[np.ndarray],
    following: Sequence[np.ndarray],
    L: int,
) -> np.ndarray:
    """Average the frame with L subframes on each side: (f_t + sum) / (1 + 2L).

    Accumulation runs in extended precision with a single final division. That
    makes the static-scene case exact — 1+2L equal summands of a double fit the
    wider mantissa without rounding, and the division then restores the input
    bit-for-bit — while plain double accumulation drifts by an ulp often enough
    to break the identity fixtures.
    """
    if len(preceding) != L or len(following) != L:
        raise ValueError(
            f"need exactly L={L} subframes per side, got {len(preceding)} preceding "
            f"and {len(following)} following"
        )
    acc = f_t.astype(np.longdouble)
    for sub in preceding:
        if sub.shape != f_t.shape:
            raise ValueError(f"subframe shape {sub.shape} does not match frame {f_t.shape}")
        acc += sub
    for sub in following:
        if sub.shape != f_t.shape:
            raise ValueError(f"subframe shape {sub.shape} does not match frame {f_t.shape}")
        acc += sub
    return np.asarray(acc / (1 + 2 * L), dtype=np.float64)


def sharpness_score(frame: np.ndarray, threshold: float = 1e-3) -> tuple[float, bool]:
    """Variance of the 3x3 Laplacian on luminance; pass iff >= threshold.

    Blur suppresses high frequencies first, so the Laplacian response variance
    drops monotonically with blur strength — a cheap, resolution-robust gate.
    """
    if frame.ndim == 3 and frame.shape[0] == 3:
        r, g, b = frame.astype(np.float64)
        gray = 0.299 * r + 0.587 * g + 0.114 * b
    elif frame.ndim == 2:
        gray = frame.astype(np.float64)
    else:
        raise ValueError(f"expected (h, w) or (3, h, w) frame, got shape {frame.shape}")
    response = ndimage.laplace(gray, mode="reflect")
    score = float(response.var())
    return score, score >= threshold
