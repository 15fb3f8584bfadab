"""Reverse-mode automatic differentiation on numpy arrays.

A ``Tensor`` wraps an ndarray together with the closure that propagates
gradients to its parents.  Ops (see ``rdn.nn.ops``) build the graph as they
run; calling ``backward()`` on a scalar result walks the graph once in
reverse topological order and accumulates ``.grad`` on every node.

Gradient tracking can be suspended with the ``no_grad()`` context manager,
which drops the bookkeeping entirely (used by the inference paths).
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterator

import numpy as np

# per-thread so parallel inference (tiled) cannot clobber a training thread
_grad_state = threading.local()


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph construction inside the ``with`` block."""
    prev = grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = prev


def grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


class Tensor:
    """An ndarray plus the backward closure that produced it."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents: tuple = (), backward: Callable | None = None):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        if grad_enabled():
            self._parents = parents
            self._backward = backward
        else:
            self._parents = ()
            self._backward = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        """A new leaf tensor sharing this tensor's data."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Accumulate gradients of this (scalar) tensor w.r.t. the graph."""
        if seed is None:
            if self.data.size != 1:
                raise ValueError(
                    f"backward() without a seed needs a scalar, got shape {self.data.shape}"
                )
            seed = np.ones_like(self.data)

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        self.grad = np.asarray(seed, dtype=self.data.dtype)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)
