"""The deblur block and its recurrent unrolling.

One block consumes the current prediction together with the next observation
and emits a sharper prediction plus the temporal features handed to the next
step.  Unrolling applies the same block (same parameters) once per
observation, nearest frame first; the initial "prediction" is the target
frame itself.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..nn import Tensor, add, batchnorm, channel_concat, conv2d, conv_transpose2d, mse, relu, sum_tensors
from .params import LayerParams, RdnParams


@dataclass
class TemporalFeatures:
    """Linked-layer activations carried into the next recurrent step."""

    t4: Tensor  # 256*wm channels at H/8
    t5: Tensor  # 128*wm channels at H/4
    t6: Tensor  # 64*wm channels at H/2


@dataclass
class DeblurState:
    prediction: Tensor
    temporal: TemporalFeatures | None
    step_index: int = 0


@dataclass
class UnrollResult:
    predictions: list[Tensor]
    step_losses: list[Tensor] | None
    loss: Tensor | None


def _apply(lp: LayerParams, x: Tensor) -> Tensor:
    """Pre-activation (BN then ReLU, when configured) followed by the conv itself."""
    if lp.bn is not None:
        x = batchnorm(x, lp.bn)
    if lp.defn.preact:
        x = relu(x)
    if lp.defn.spec.transposed:
        return conv_transpose2d(x, lp.defn.spec, lp.weight, lp.bias)
    return conv2d(x, lp.defn.spec, lp.weight, lp.bias)


def _res_group(params: RdnParams, prefix: str, x: Tensor) -> Tensor:
    """Three stride-1 convs spanned by an identity shortcut."""
    y = _apply(params.layers[f"{prefix}_res1"], x)
    y = _apply(params.layers[f"{prefix}_res2"], y)
    y = _apply(params.layers[f"{prefix}_res3"], y)
    return add(x, y)


def _link(params: RdnParams, blend_name: str, current: Tensor, carried: Tensor | None) -> Tensor:
    """Blend the starred activation with its carried twin; pass through at step 0."""
    if carried is None:
        return current
    if carried.data.shape != current.data.shape:
        raise ValueError(
            f"temporal feature for {blend_name} has shape {carried.data.shape}, "
            f"expected {current.data.shape}"
        )
    lp = params.layers[blend_name]
    return conv2d(channel_concat(current, carried), lp.defn.spec, lp.weight, lp.bias)


def deblur_block(state: DeblurState, observation: Tensor, params: RdnParams, mode: str = "train") -> DeblurState:
    """One recurrent step: (prediction, observation) -> sharper prediction.

    The temporal skip path is disabled entirely on step 0, whatever the
    temporal slots contain.
    """
    pred = state.prediction
    if observation.data.ndim != 4 or observation.data.shape[1] != 3:
        raise ValueError(f"observation must be (n, 3, h, w), got {observation.data.shape}")
    if observation.data.shape != pred.data.shape:
        raise ValueError(f"observation shape {observation.data.shape} != prediction {pred.data.shape}")
    h, w = observation.data.shape[2:]
    if h % 8 or w % 8:
        raise ValueError(f"frame dims must be divisible by 8, got {h}x{w}")

    linked = state.step_index > 0
    if linked and state.temporal is None:
        raise ValueError(f"step {state.step_index} requires temporal features from the previous step")
    params.set_mode(mode)
    L = params.layers

    x = channel_concat(pred, observation)
    x = _apply(L["a01"], x)

    e1 = _res_group(params, "enc1", _apply(L["enc1_down"], x))
    e2 = _res_group(params, "enc2", _apply(L["enc2_entry"], e1))
    e3 = _res_group(params, "enc3", _apply(L["enc3_down"], e2))

    t4 = _link(params, "blend4", _apply(L["enc4_down"], e3), state.temporal.t4 if linked else None)
    e4 = _res_group(params, "enc4", t4)

    t5 = _link(params, "blend5", _apply(L["dec5_up"], e4), state.temporal.t5 if linked else None)
    d5 = add(_res_group(params, "dec5", t5), e3)

    t6 = _link(params, "blend6", _apply(L["dec6_up"], d5), state.temporal.t6 if linked else None)
    d6 = add(_res_group(params, "dec6", t6), e2)

    y = _apply(L["head_up"], d6)
    y = _apply(L["head_conv"], y)
    prediction = _apply(L["head_out"], y)

    return DeblurState(prediction, TemporalFeatures(t4, t5, t6), state.step_index + 1)


def rdn_unroll(
    frames: list[Tensor],
    params: RdnParams,
    ground_truth: Tensor | None = None,
    mode: str = "train",
    through_time: bool = False,
) -> UnrollResult:
    """Run the deblur block over [target, obs_1, ..., obs_m], nearest first.

    With a ground truth, every step contributes a mean-squared-error term and
    the total loss is their (uniformly weighted) sum.

    By default the prediction handed to the next step is detached: every step
    already has its own loss term, and cutting the hand-off keeps the gradient
    scale flat across steps (chained block Jacobians otherwise amplify early
    layers' gradients by orders of magnitude, drowning the per-step signal).
    The temporal-feature links stay differentiable either way.  Pass
    ``through_time=True`` to backpropagate through the hand-off as well, e.g.
    to check the composed graph against finite differences.
    """
    if len(frames) < 2:
        raise ValueError(f"need the target frame plus at least one observation, got {len(frames)}")
    shape = frames[0].data.shape
    for i, f in enumerate(frames):
        if f.data.shape != shape:
            raise ValueError(f"frame {i} shape {f.data.shape} drifts from {shape}")

    state = DeblurState(prediction=frames[0], temporal=None, step_index=0)
    predictions: list[Tensor] = []
    losses: list[Tensor] = [] if ground_truth is not None else None
    for obs in frames[1:]:
        state = deblur_block(state, obs, params, mode=mode)
        predictions.append(state.prediction)
        if ground_truth is not None:
            losses.append(mse(state.prediction, ground_truth))
        if not through_time:
            state = DeblurState(state.prediction.detach(), state.temporal, state.step_index)

    total = sum_tensors(losses) if losses else None
    return UnrollResult(predictions, losses, total)
