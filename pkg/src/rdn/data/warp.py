"""Flow-guided warping and subframe interpolation."""

from __future__ import annotations

import numpy as np

from ..resample import bilinear_sample
from .flow import FlowField

__all__ = ["synth_subframe", "warp_bilinear"]


def warp_bilinear(frame: np.ndarray, flow: FlowField, scale: float) -> np.ndarray:
    """Backward-warp ``frame`` by ``scale`` times ``flow``.

    Output pixel p samples ``frame`` at ``p + scale * w(p)`` with bilinear
    interpolation; samples beyond the border clamp to the edge. ``scale = 0``
    is an exact identity.
    """
    h, w = frame.shape[-2:]
    if flow.shape != (h, w):
        raise ValueError(f"flow shape {flow.shape} does not match frame {h}x{w}")
    gx, gy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    return bilinear_sample(frame, gx + scale * flow.u, gy + scale * flow.v)


def _subframe_at_alpha(
    f_t: np.ndarray,
    f_t1: np.ndarray,
    flow_fwd: FlowField,
    flow_bwd: FlowField,
    alpha: float,
) -> np.ndarray:
    """Two-sided warp blend at blend position ``alpha`` in [0, 1).

    Anchored form: for a static scene both warps return the same array and the
    result equals ``f_t`` exactly, which the end-to-end identity tests require.
    """
    wa = warp_bilinear(f_t, flow_fwd, alpha)
    wb = warp_bilinear(f_t1, flow_bwd, 1.0 - alpha)
    return wa + alpha * (wb - wa)


def synth_subframe(
    f_t: np.ndarray,
    f_t1: np.ndarray,
    flow_fwd: FlowField,
    flow_bwd: FlowField,
    l: int,
    n: int,
) -> np.ndarray:
    """Synthesise subframe ``l`` of ``n`` between two frames.

    Blend position alpha = l / (n + 1); the symmetric two-sided average of
    forward-warped ``f_t`` and backward-warped ``f_t1`` avoids the one-sided
    occlusion smear a single warp would produce.
    """
    if not 1 <= l <= n:
        raise ValueError(f"subframe index l={l} outside 1..n={n}")
    if f_t.shape != f_t1.shape:
        raise ValueError(f"frame shape mismatch: {f_t.shape} vs {f_t1.shape}")
    return _subframe_at_alpha(f_t, f_t1, flow_fwd, flow_bwd, l / (n + 1))
