"""Differentiable layer operations on NCHW tensors.

Convolutions use SAME zero padding: output spatial dims are ceil(input/stride),
and when the total padding for an axis is odd the extra pixel goes on the
top/left.  Weights are stored as (kh, kw, c_in, c_out).  A transposed
convolution is the exact adjoint of the stride-s convolution with the same
kernel, so it reuses the conv weight layout of the downsampling op it inverts.

The im2col/col2im pair routes the heavy lifting through BLAS matmuls; the
nested-loop reference implementations live in the test suite, not here.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, grad_enabled


@dataclass(frozen=True)
class ConvSpec:
    """Static description of a convolution: kernel (kh, kw, c_in, c_out) and stride."""

    kernel: tuple[int, int, int, int]
    stride: int = 1
    transposed: bool = False

    def __post_init__(self):
        kh, kw, cin, cout = self.kernel
        if kh < 1 or kw < 1 or cin < 1 or cout < 1:
            raise ValueError(f"conv kernel dims must be positive, got {self.kernel}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        kh, kw, cin, cout = self.kernel
        # Transposed layers store the kernel of the downsampling conv they invert.
        return (kh, kw, cout, cin) if self.transposed else (kh, kw, cin, cout)


def same_padding(h: int, w: int, kh: int, kw: int, stride: int):
    """SAME padding (top/left biased) and the resulting output dims."""
    oh = -(-h // stride)
    ow = -(-w // stride)
    ph = max((oh - 1) * stride + kh - h, 0)
    pw = max((ow - 1) * stride + kw - w, 0)
    return (ph - ph // 2, ph // 2, pw - pw // 2, pw // 2), (oh, ow)


def _check_finite(name: str, a: np.ndarray) -> None:
    if not np.isfinite(a).all():
        raise FloatingPointError(f"non-finite values in {name}")


def _check_image(x: np.ndarray) -> None:
    if x.ndim != 4:
        raise ValueError(f"expected NCHW tensor, got {x.ndim} dims")


# ---------------------------------------------------------------------------
# raw conv kernels (ndarray in, ndarray out)


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(n, c, H, W) padded input -> (n, oh, ow, c, kh, kw) window view copy."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))


def _conv_fwd(x: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    n, c, h, wd = x.shape
    kh, kw, cin, cout = w.shape
    (pt, pb, pl, pr), (oh, ow) = same_padding(h, wd, kh, kw, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    cols = _im2col(xp, kh, kw, stride).reshape(n * oh * ow, c * kh * kw)
    wmat = w.transpose(2, 0, 1, 3).reshape(cin * kh * kw, cout)
    out = cols @ wmat
    return out.reshape(n, oh, ow, cout).transpose(0, 3, 1, 2)


def _conv_dx(dy: np.ndarray, w: np.ndarray, stride: int, x_shape: tuple) -> np.ndarray:
    """Gradient of _conv_fwd w.r.t. x; also the forward map of the adjoint (transposed) conv."""
    n, c, h, wd = x_shape
    kh, kw, cin, cout = w.shape
    (pt, pb, pl, pr), (oh, ow) = same_padding(h, wd, kh, kw, stride)
    wmat = w.transpose(2, 0, 1, 3).reshape(cin * kh * kw, cout)
    cols = dy.transpose(0, 2, 3, 1).reshape(n * oh * ow, cout) @ wmat.T
    cols = cols.reshape(n, oh, ow, cin, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    dxp = np.zeros((n, c, h + pt + pb, wd + pl + pr), dtype=dy.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[:, :, i, j]
    return dxp[:, :, pt : pt + h, pl : pl + wd]


def _conv_dw(x: np.ndarray, dy: np.ndarray, stride: int, w_shape: tuple) -> np.ndarray:
    n, c, h, wd = x.shape
    kh, kw, cin, cout = w_shape
    (pt, pb, pl, pr), (oh, ow) = same_padding(h, wd, kh, kw, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    cols = _im2col(xp, kh, kw, stride).reshape(n * oh * ow, c * kh * kw)
    dmat = dy.transpose(0, 2, 3, 1).reshape(n * oh * ow, cout)
    dw = cols.T @ dmat
    return dw.reshape(cin, kh, kw, cout).transpose(1, 2, 0, 3)


# ---------------------------------------------------------------------------
# differentiable ops


def conv2d(x: Tensor, spec: ConvSpec, weights: Tensor, bias: Tensor | None = None) -> Tensor:
    """SAME-padded 2-D convolution, stride per spec."""
    kh, kw, cin, cout = spec.kernel
    _check_image(x.data)
    if x.data.shape[1] != cin:
        raise ValueError(f"channel mismatch: input has {x.data.shape[1]} channels, spec expects {cin}")
    if weights.data.shape != spec.weight_shape:
        raise ValueError(f"weight shape {weights.data.shape} != spec {spec.weight_shape}")
    if x.data.shape[2] % spec.stride or x.data.shape[3] % spec.stride:
        raise ValueError(
            f"spatial dims {x.data.shape[2:]} not divisible by stride {spec.stride}"
        )
    _check_finite("conv2d input", x.data)
    _check_finite("conv2d weights", weights.data)

    out = _conv_fwd(x.data, weights.data, spec.stride)
    if bias is not None:
        out += bias.data[None, :, None, None]

    parents = (x, weights) if bias is None else (x, weights, bias)
    result = Tensor(out, parents)
    if not grad_enabled():
        return result

    def backward(g: np.ndarray) -> None:
        x.accumulate_grad(_conv_dx(g, weights.data, spec.stride, x.data.shape))
        weights.accumulate_grad(_conv_dw(x.data, g, spec.stride, weights.data.shape))
        if bias is not None:
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)))

    result._backward = backward
    return result


def conv_transpose2d(x: Tensor, spec: ConvSpec, weights: Tensor, bias: Tensor | None = None) -> Tensor:
    """Adjoint of the stride-s SAME convolution with the same kernel.

    ``spec.kernel`` is (kh, kw, c_in, c_out) of this op; the weight array has
    shape (kh, kw, c_out, c_in) — the kernel of the downsampling conv whose
    transpose this computes.  Output spatial dims are stride times the input's.
    """
    kh, kw, cin, cout = spec.kernel
    _check_image(x.data)
    if x.data.shape[1] != cin:
        raise ValueError(f"channel mismatch: input has {x.data.shape[1]} channels, spec expects {cin}")
    if weights.data.shape != spec.weight_shape:
        raise ValueError(f"weight shape {weights.data.shape} != spec {spec.weight_shape}")
    _check_finite("conv_transpose2d input", x.data)
    _check_finite("conv_transpose2d weights", weights.data)

    n, _, h, w = x.data.shape
    big_shape = (n, cout, h * spec.stride, w * spec.stride)
    out = _conv_dx(x.data, weights.data, spec.stride, big_shape)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    parents = (x, weights) if bias is None else (x, weights, bias)
    result = Tensor(out, parents)
    if not grad_enabled():
        return result

    def backward(g: np.ndarray) -> None:
        x.accumulate_grad(_conv_fwd(g, weights.data, spec.stride))
        weights.accumulate_grad(_conv_dw(g, x.data, spec.stride, weights.data.shape))
        if bias is not None:
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)))

    result._backward = backward
    return result


@dataclass
class BatchNormState:
    """Per-layer batchnorm parameters plus running statistics.

    One state is shared across all recurrent steps of the unrolled network;
    every train-mode forward updates the running stats as a side effect.
    """

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5
    mode: str = "train"

    @classmethod
    def create(cls, channels: int, dtype=np.float32, momentum: float = 0.9, eps: float = 1e-5):
        return cls(
            gamma=Tensor(np.ones(channels, dtype=dtype)),
            beta=Tensor(np.zeros(channels, dtype=dtype)),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
            momentum=momentum,
            eps=eps,
        )


def batchnorm(x: Tensor, state: BatchNormState) -> Tensor:
    """Channel-wise batch normalization with scale/shift.

    Train mode normalizes by the batch statistics over (n, h, w) and updates
    the running stats; infer mode normalizes by the stored running stats.
    """
    _check_image(x.data)
    c = x.data.shape[1]
    if state.gamma.data.shape[0] != c:
        raise ValueError(f"channel mismatch: input has {c} channels, batchnorm has {state.gamma.data.shape[0]}")
    if x.data.shape[2] == 0 or x.data.shape[3] == 0:
        raise ValueError(f"batchnorm needs a non-empty spatial extent, got {x.data.shape}")
    eps = x.data.dtype.type(state.eps)

    if state.mode == "train":
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        m = state.momentum
        state.running_mean = m * state.running_mean + (1.0 - m) * mu.astype(state.running_mean.dtype)
        state.running_var = m * state.running_var + (1.0 - m) * var.astype(state.running_var.dtype)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu[None, :, None, None]) * inv_std[None, :, None, None]
    elif state.mode == "infer":
        inv_std = 1.0 / np.sqrt(state.running_var.astype(x.data.dtype) + eps)
        xhat = (x.data - state.running_mean.astype(x.data.dtype)[None, :, None, None]) * inv_std[None, :, None, None]
    else:
        raise ValueError(f"batchnorm mode must be 'train' or 'infer', got {state.mode!r}")

    y = state.gamma.data[None, :, None, None] * xhat + state.beta.data[None, :, None, None]
    result = Tensor(y, (x, state.gamma, state.beta))
    if not grad_enabled():
        return result

    train = state.mode == "train"

    def backward(g: np.ndarray) -> None:
        state.beta.accumulate_grad(g.sum(axis=(0, 2, 3)))
        state.gamma.accumulate_grad((g * xhat).sum(axis=(0, 2, 3)))
        gam = state.gamma.data[None, :, None, None]
        if train:
            gx = g * gam
            mean_gx = gx.mean(axis=(0, 2, 3), keepdims=True)
            mean_gx_xhat = (gx * xhat).mean(axis=(0, 2, 3), keepdims=True)
            dx = inv_std[None, :, None, None] * (gx - mean_gx - xhat * mean_gx_xhat)
        else:
            dx = g * gam * inv_std[None, :, None, None]
        x.accumulate_grad(dx)

    result._backward = backward
    return result


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    result = Tensor(np.where(mask, x.data, x.data.dtype.type(0)), (x,))
    if not grad_enabled():
        return result

    def backward(g: np.ndarray) -> None:
        x.accumulate_grad(g * mask)

    result._backward = backward
    return result


def channel_concat(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the channel axis; spatial and batch dims must agree."""
    _check_image(a.data)
    _check_image(b.data)
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2:] != b.data.shape[2:]:
        raise ValueError(f"concat shape mismatch: {a.data.shape} vs {b.data.shape}")
    ca = a.data.shape[1]
    result = Tensor(np.concatenate([a.data, b.data], axis=1), (a, b))
    if not grad_enabled():
        return result

    def backward(g: np.ndarray) -> None:
        a.accumulate_grad(g[:, :ca])
        b.accumulate_grad(g[:, ca:])

    result._backward = backward
    return result


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    result = Tensor(a.data + b.data, (a, b))
    if not grad_enabled():
        return result

    def backward(g: np.ndarray) -> None:
        a.accumulate_grad(g)
        b.accumulate_grad(g)

    result._backward = backward
    return result


def mse(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over all elements, as a scalar tensor."""
    if pred.data.shape != target.data.shape:
        raise ValueError(f"mse shape mismatch: {pred.data.shape} vs {target.data.shape}")
    diff = pred.data - target.data
    result = Tensor(np.asarray((diff * diff).mean(), dtype=pred.data.dtype), (pred, target))
    if not grad_enabled():
        return result

    def backward(g: np.ndarray) -> None:
        scale = g * pred.data.dtype.type(2.0 / diff.size)
        pred.accumulate_grad(scale * diff)
        target.accumulate_grad(-scale * diff)

    result._backward = backward
    return result


def inner(x: Tensor, probe: np.ndarray) -> Tensor:
    """Inner product with a constant array — a scalar probe for verification."""
    if x.data.shape != probe.shape:
        raise ValueError(f"inner shape mismatch: {x.data.shape} vs {probe.shape}")
    result = Tensor(np.asarray((x.data * probe).sum(), dtype=x.data.dtype), (x,))
    if not grad_enabled():
        return result

    def backward(g: np.ndarray) -> None:
        x.accumulate_grad(g * probe.astype(x.data.dtype))

    result._backward = backward
    return result


def sum_tensors(ts: list[Tensor]) -> Tensor:
    """Sum a non-empty list of same-shape tensors (used for the per-step losses)."""
    if not ts:
        raise ValueError("sum_tensors needs at least one tensor")
    return functools.reduce(add, ts)
