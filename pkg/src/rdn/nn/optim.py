"""Adam optimizer over a named parameter set."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


@dataclass
class AdamState:
    """First/second moment accumulators, keyed like the parameter dict."""

    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState) -> None:
    """One Adam update, in place on the parameter arrays.

    Refuses the whole step (raises, no mutation) if any gradient is non-finite.
    """
    for name in params:
        if name not in grads:
            raise KeyError(f"missing gradient for parameter {name!r}")
        if not np.isfinite(grads[name]).all():
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}; step refused")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.t
    bias2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / bias1
        vhat = v / bias2
        p -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.dtype)
