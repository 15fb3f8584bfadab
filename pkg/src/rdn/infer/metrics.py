"""Quality metrics for [0, 1] images."""

from __future__ import annotations

import numpy as np

__all__ = ["psnr"]


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/MSE) over [0, 1] arrays; identical inputs give +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)
