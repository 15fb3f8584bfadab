from .autodiff import Tensor, as_tensor, no_grad
from .gradcheck import grad_check
from .ops import (
    BatchNormState,
    ConvSpec,
    add,
    batchnorm,
    channel_concat,
    conv2d,
    conv_transpose2d,
    inner,
    mse,
    relu,
    same_padding,
    sum_tensors,
)
from .optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "BatchNormState",
    "ConvSpec",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "batchnorm",
    "channel_concat",
    "conv2d",
    "conv_transpose2d",
    "grad_check",
    "inner",
    "mse",
    "no_grad",
    "relu",
    "same_padding",
    "sum_tensors",
]
