"""Optical-flow estimator contracts on synthetic motions."""

import numpy as np
import pytest
from scipy import ndimage

from rdn.data import estimate_flow


def smooth_texture(h, w, seed, sigma=1.5):
    r = np.random.default_rng(seed)
    t = ndimage.gaussian_filter(r.random((h, w)), sigma)
    return (t - t.min()) / (t.max() - t.min())


def shifted_pair(h, w, dx, dy, seed=0):
    """Crop two windows of one texture so f_a(p + (dx, dy)) == f_b(p) exactly."""
    pad = 8
    big = smooth_texture(h + 2 * pad, w + 2 * pad, seed)
    f_a = big[pad : pad + h, pad : pad + w]
    f_b = big[pad + dy : pad + dy + h, pad + dx : pad + dx + w]
    return f_a, f_b


class TestEstimateFlow:
    def test_identical_frames_zero_flow(self, rng):
        f = rng.random((3, 32, 32))
        flow = estimate_flow(f, f)
        np.testing.assert_array_equal(flow.u, 0.0)
        np.testing.assert_array_equal(flow.v, 0.0)
        assert flow.confident

    @pytest.mark.parametrize("dx,dy", [(2, 0), (0, 3), (3, 1), (-2, 2)])
    def test_global_translation(self, dx, dy):
        f_a, f_b = shifted_pair(72, 72, dx, dy)
        flow = estimate_flow(f_a, f_b)
        inner = (slice(8, -8), slice(8, -8))
        epe = np.hypot(flow.u[inner] - dx, flow.v[inner] - dy)
        assert epe.mean() < 0.25, f"mean endpoint error {epe.mean():.3f} px"

    def test_constant_image_degenerate(self):
        f = np.full((3, 24, 24), 0.5)
        flow = estimate_flow(f, f + 0.0)
        assert not flow.confident
        np.testing.assert_array_equal(flow.u, 0.0)
        np.testing.assert_array_equal(flow.v, 0.0)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError, match="mismatch"):
            estimate_flow(rng.random((16, 16)), rng.random((16, 18)))

    def test_max_displacement_clip(self):
        f_a, f_b = shifted_pair(48, 48, 3, 0)
        flow = estimate_flow(f_a, f_b, max_disp=1.0)
        assert np.abs(flow.u).max() <= 1.0
        assert np.abs(flow.v).max() <= 1.0

    def test_direction_tag(self, rng):
        f = rng.random((16, 16))
        assert estimate_flow(f, f, direction="backward").direction == "backward"

    def test_finite_everywhere(self):
        f_a, f_b = shifted_pair(40, 56, 1, 2, seed=5)
        flow = estimate_flow(f_a, f_b)
        assert np.isfinite(flow.u).all() and np.isfinite(flow.v).all()
