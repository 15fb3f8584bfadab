"""Parameter set for the recurrent deblur network.

The architecture is a fixed encoder-decoder:

* stem ``a01`` (3x3, 6 -> 64*wm) on the concatenated (prediction, observation) pair;
* encoder blocks 1-4, each an entry conv (stride 2 for 1, 3, 4) followed by a
  three-conv residual group — block 4 reaches H/8 at 256*wm channels;
* decoder blocks 5-6, each a 4x4 transposed conv (stride 1/2) followed by a
  residual group, with the matching encoder output added back in;
* head: one more 4x4 transposed conv up to full resolution, a 4x4 conv down to
  6 channels, and a final 3x3 conv producing the 3-channel prediction.

The entry convs of block 4 and the two decoder blocks are "linked" layers:
their outputs can be concatenated with same-shape features carried over from
the previous recurrent step and mixed back down by a 1x1 blend layer that
halves the channel count.  One parameter set serves every recurrent step.

``width_multiplier`` scales all channel counts; 1 reproduces the full-size
network (64/128/256), 1/8 is the desk-scale default used in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..nn import BatchNormState, ConvSpec, Tensor


@dataclass(frozen=True)
class LayerDef:
    name: str
    spec: ConvSpec
    has_bn: bool          # owns a batchnorm applied to this layer's input
    preact: bool          # ReLU applied to this layer's input


@dataclass
class LayerParams:
    defn: LayerDef
    weight: Tensor
    bias: Tensor
    bn: BatchNormState | None


def _scaled(base: int, wm: Fraction) -> int:
    c = base * wm
    if c.denominator != 1 or c < 1:
        raise ValueError(f"width_multiplier {wm} gives non-integer channel count for base {base}")
    return int(c)


def build_layer_table(width_multiplier: Fraction) -> list[LayerDef]:
    wm = Fraction(width_multiplier)
    c1 = _scaled(64, wm)
    c2 = _scaled(128, wm)
    c3 = _scaled(256, wm)

    defs: list[LayerDef] = []

    def conv(name, k, cin, cout, stride=1, bn=True, preact=True):
        defs.append(LayerDef(name, ConvSpec((k, k, cin, cout), stride=stride), bn, preact))

    def tconv(name, cin, cout):
        defs.append(LayerDef(name, ConvSpec((4, 4, cin, cout), stride=2, transposed=True), True, True))

    conv("a01", 3, 6, c1, bn=False, preact=False)

    conv("enc1_down", 3, c1, c1, stride=2)
    for i in (1, 2, 3):
        conv(f"enc1_res{i}", 3, c1, c1)
    conv("enc2_entry", 3, c1, c1)
    for i in (1, 2, 3):
        conv(f"enc2_res{i}", 3, c1, c1)
    conv("enc3_down", 3, c1, c2, stride=2)
    for i in (1, 2, 3):
        conv(f"enc3_res{i}", 3, c2, c2)
    conv("enc4_down", 3, c2, c3, stride=2)
    conv("blend4", 1, 2 * c3, c3, bn=False, preact=False)
    for i in (1, 2, 3):
        conv(f"enc4_res{i}", 3, c3, c3)

    tconv("dec5_up", c3, c2)
    conv("blend5", 1, 2 * c2, c2, bn=False, preact=False)
    for i in (1, 2, 3):
        conv(f"dec5_res{i}", 3, c2, c2)
    tconv("dec6_up", c2, c1)
    conv("blend6", 1, 2 * c1, c1, bn=False, preact=False)
    for i in (1, 2, 3):
        conv(f"dec6_res{i}", 3, c1, c1)

    tconv("head_up", c1, c1)
    conv("head_conv", 4, c1, 6)
    conv("head_out", 3, 6, 3)
    return defs


class RdnParams:
    """All layer weights/biases/BN states, keyed by layer name."""

    def __init__(self, width_multiplier: Fraction, layers: dict[str, LayerParams]):
        self.width_multiplier = Fraction(width_multiplier)
        self.layers = layers

    @property
    def dtype(self):
        return self.layers["a01"].weight.data.dtype

    def channels(self) -> tuple[int, int, int]:
        """(64*wm, 128*wm, 256*wm) — the three temporal-feature channel counts."""
        wm = self.width_multiplier
        return _scaled(64, wm), _scaled(128, wm), _scaled(256, wm)

    def set_mode(self, mode: str) -> None:
        for lp in self.layers.values():
            if lp.bn is not None:
                lp.bn.mode = mode

    def trainable(self) -> dict[str, Tensor]:
        """Name -> tensor for every parameter the optimizer updates."""
        out: dict[str, Tensor] = {}
        for name, lp in self.layers.items():
            out[f"{name}.weight"] = lp.weight
            out[f"{name}.bias"] = lp.bias
            if lp.bn is not None:
                out[f"{name}.bn.gamma"] = lp.bn.gamma
                out[f"{name}.bn.beta"] = lp.bn.beta
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Trainable params plus BN running stats — everything a checkpoint holds."""
        out = {name: t.data for name, t in self.trainable().items()}
        for name, lp in self.layers.items():
            if lp.bn is not None:
                out[f"{name}.bn.running_mean"] = lp.bn.running_mean
                out[f"{name}.bn.running_var"] = lp.bn.running_var
        return out

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.trainable().values())

    def zero_grads(self) -> None:
        for t in self.trainable().values():
            t.zero_grad()


def init_params(width_multiplier, seed: int = 0, dtype=np.float32) -> RdnParams:
    """He fan-in initialization of all conv weights; BN starts at identity."""
    wm = Fraction(width_multiplier)
    rng = np.random.default_rng(seed)
    layers: dict[str, LayerParams] = {}
    for d in build_layer_table(wm):
        kh, kw, cin, cout = d.spec.kernel
        fan_in = kh * kw * cin
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=d.spec.weight_shape).astype(dtype)
        b = np.zeros(cout, dtype=dtype)
        bn = BatchNormState.create(cin, dtype=dtype) if d.has_bn else None
        layers[d.name] = LayerParams(d, Tensor(w), Tensor(b), bn)
    return RdnParams(wm, layers)
