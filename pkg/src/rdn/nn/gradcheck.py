"""Central-difference gradient verification.

Analytic gradients are compared against (f(x+h) - f(x-h)) / 2h with a step
relative to each entry's magnitude.  Large parameter tensors are spot-checked
on a deterministic random subset of entries; the reported number is the max
relative error per parameter group.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .autodiff import Tensor


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    *,
    step: float = 1e-5,
    max_entries: int = 10,
    seed: int = 0,
) -> dict[str, float]:
    """Max relative error between analytic and numeric gradients, per group.

    ``loss_fn`` must re-evaluate the scalar loss from the current contents of
    ``params`` (all float64 for trustworthy differences).
    """
    for name, p in params.items():
        if p.data.dtype != np.float64:
            raise TypeError(f"grad_check needs float64 parameters, {name!r} is {p.data.dtype}")

    for p in params.values():
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {}
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"parameter {name!r} received no gradient")
        analytic[name] = p.grad.copy()

    rng = np.random.default_rng(seed)
    report: dict[str, float] = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if n <= max_entries:
            idx = np.arange(n)
        else:
            idx = rng.choice(n, size=max_entries, replace=False)
        worst = 0.0
        for i in idx:
            orig = flat[i]
            h = step * max(1.0, abs(orig))
            flat[i] = orig + h
            f_plus = float(loss_fn().data)
            flat[i] = orig - h
            f_minus = float(loss_fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = analytic[name].reshape(-1)[i]
            denom = max(abs(a) + abs(numeric), 1e-6)
            worst = max(worst, abs(a - numeric) / denom)
        report[name] = worst
    return report
