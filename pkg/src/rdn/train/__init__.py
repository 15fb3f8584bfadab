"""Training harness: batching, optimization loop, logging, resumption."""

from .loop import (
    TrainConfig,
    TrainDivergence,
    TrainResult,
    load_corpus,
    sample_batch,
    train_loop,
    train_step,
)

__all__ = [
    "TrainConfig",
    "TrainDivergence",
    "TrainResult",
    "load_corpus",
    "sample_batch",
    "train_loop",
    "train_step",
]
