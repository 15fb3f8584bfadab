"""Mini-batch training of the recurrent deblur network on a forged corpus.

Reproducibility contract: every iteration draws from a fresh RNG seeded by
(config.seed, iteration), and the optimizer state rides inside checkpoints as
``opt.*`` entries, so a resumed run replays the exact arithmetic of an
uninterrupted one. With ``log_timing`` off the training log is byte-identical
across runs as well.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from ..data import TrainingSample, apply_psf, list_samples, load_sample, sample_psf
from ..infer.metrics import psnr
from ..model import RdnParams, init_params, load_checkpoint, rdn_unroll, save_checkpoint
from ..nn import AdamState, Tensor, adam_step, no_grad

__all__ = [
    "TrainConfig",
    "TrainDivergence",
    "TrainResult",
    "load_corpus",
    "sample_batch",
    "train_loop",
    "train_step",
]

log = logging.getLogger(__name__)

FRAMES_PER_SAMPLE = 5


class TrainDivergence(RuntimeError):
    """Raised when a step produces a non-finite loss or gradient."""


@dataclass
class TrainConfig:
    corpus_dir: Path
    out_dir: Path
    width_multiplier: Fraction = Fraction(1, 8)
    batch_size: int = 4
    steps: int = 4
    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    max_iterations: int = 1000
    checkpoint_every: int = 100
    seed: int = 0
    psf_on_the_fly: bool = False
    psf_sizes: tuple[int, ...] = (7, 11, 15)
    shake_mag: float = 1.0
    holdout: int = 0
    psnr_every: int = 100
    log_timing: bool = True

    def __post_init__(self) -> None:
        self.corpus_dir = Path(self.corpus_dir)
        self.out_dir = Path(self.out_dir)
        self.width_multiplier = Fraction(self.width_multiplier)
        if not 1 <= self.steps <= FRAMES_PER_SAMPLE - 1:
            raise ValueError(f"steps must be in 1..{FRAMES_PER_SAMPLE - 1}, got {self.steps}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.max_iterations < 0 or self.checkpoint_every < 1:
            raise ValueError("max_iterations must be >= 0 and checkpoint_every >= 1")


@dataclass
class StepStats:
    loss: float
    step_losses: list[float]


@dataclass
class TrainResult:
    status: str  # "completed" or "halted"
    iterations: int
    checkpoint: Path | None
    log_path: Path
    final_loss: float = float("nan")


def load_corpus(corpus_dir) -> list[TrainingSample]:
    paths = list_samples(corpus_dir)
    if not paths:
        raise FileNotFoundError(f"no training samples (sample_*.rdns) in {corpus_dir}")
    return [load_sample(p) for p in paths]


def sample_batch(
    samples: list[TrainingSample],
    batch_size: int,
    rng: np.random.Generator,
    *,
    steps: int = 4,
    psf_on_the_fly: bool = False,
    psf_sizes: tuple[int, ...] = (7, 11, 15),
    shake_mag: float = 1.0,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Draw uniformly with replacement; returns (frames[steps+1], sharp).

    With ``psf_on_the_fly`` each drawn blurry frame gets a fresh random shake
    kernel, so repeated draws of one sample differ in blur while sharing the
    sharp ground truth. Feed that mode from a corpus forged with shake_mag 0,
    otherwise kernels compound.
    """
    if not samples:
        raise ValueError("cannot sample from an empty corpus")
    idx = rng.integers(0, len(samples), size=batch_size)
    frames = [[] for _ in range(steps + 1)]
    sharps = []
    sizes = np.asarray(psf_sizes)
    for i in idx:
        s = samples[int(i)]
        for k in range(steps + 1):
            blurry = s.blurry[k]
            if psf_on_the_fly:
                size = int(sizes[rng.integers(len(sizes))])
                seed = int(rng.integers(0, 2**63))
                blurry = apply_psf(blurry, sample_psf(size, seed, shake_mag=shake_mag))
            frames[k].append(blurry)
        sharps.append(s.sharp)
    return [np.stack(f) for f in frames], np.stack(sharps)


def train_step(
    params: RdnParams,
    frames: list[np.ndarray],
    sharp: np.ndarray,
    adam: AdamState,
) -> StepStats:
    """One forward/backward/update pass; refuses to touch params on bad numbers."""
    params.zero_grads()
    try:
        tensors = [Tensor(f) for f in frames]
        result = rdn_unroll(tensors, params, ground_truth=Tensor(sharp), mode="train")
        total = float(result.loss.data)
        if not np.isfinite(total):
            raise TrainDivergence(f"non-finite loss {total!r}; step aborted before update")
        result.loss.backward()
        trainable = params.trainable()
        weights = {name: t.data for name, t in trainable.items()}
        # a parameter outside the graph (blend layers when steps == 1) has no
        # grad; zero keeps its Adam moments at rest and the weight unchanged
        grads = {
            name: t.grad if t.grad is not None else np.zeros_like(t.data)
            for name, t in trainable.items()
        }
        adam_step(weights, grads, adam)
    except FloatingPointError as exc:
        # layer ops and adam_step both flag non-finite numbers this way, and
        # adam_step refuses before mutating, so params stay last-good
        raise TrainDivergence(str(exc)) from exc
    return StepStats(total, [float(l.data) for l in result.step_losses])


def _optimizer_extras(adam: AdamState) -> dict[str, np.ndarray]:
    extras = {"opt.t": np.array(float(adam.t), dtype=np.float32)}
    for name, m in adam.m.items():
        extras[f"opt.m.{name}"] = m
    for name, v in adam.v.items():
        extras[f"opt.v.{name}"] = v
    return extras


def _restore_optimizer(extra: dict[str, np.ndarray], cfg: TrainConfig) -> AdamState:
    adam = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    adam.t = int(extra["opt.t"])
    for name, arr in extra.items():
        if name.startswith("opt.m."):
            adam.m[name[len("opt.m.") :]] = arr.copy()
        elif name.startswith("opt.v."):
            adam.v[name[len("opt.v.") :]] = arr.copy()
    return adam


def _latest_checkpoint(out_dir: Path) -> Path | None:
    final = out_dir / "checkpoint_final.ckpt"
    if final.exists():
        return final
    numbered = sorted(out_dir.glob("checkpoint_[0-9]*.ckpt"))
    return numbered[-1] if numbered else None


def _holdout_psnr(params: RdnParams, held: list[TrainingSample], steps: int) -> float:
    frames = [np.stack([s.blurry[k] for s in held]) for k in range(steps + 1)]
    sharp = np.stack([s.sharp for s in held])
    with no_grad():
        result = rdn_unroll([Tensor(f) for f in frames], params, mode="infer")
    pred = np.clip(result.predictions[-1].data, 0.0, 1.0)
    values = [psnr(pred[i], sharp[i]) for i in range(len(held))]
    params.set_mode("train")
    return float(np.mean(values))


def train_loop(cfg: TrainConfig, resume: bool = True) -> TrainResult:
    """Run (or continue) training; writes checkpoints and a CSV log to out_dir."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    samples = load_corpus(cfg.corpus_dir)
    if not 0 <= cfg.holdout < len(samples):
        raise ValueError(f"holdout {cfg.holdout} out of range for corpus of {len(samples)}")
    held = samples[len(samples) - cfg.holdout :] if cfg.holdout else []
    train_samples = samples[: len(samples) - cfg.holdout] if cfg.holdout else samples

    start = 0
    adam = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    params = init_params(cfg.width_multiplier, seed=cfg.seed)
    last_saved: Path | None = None
    if resume:
        ckpt = _latest_checkpoint(cfg.out_dir)
        if ckpt is not None:
            params, extra = load_checkpoint(ckpt)
            if params.width_multiplier != cfg.width_multiplier:
                raise ValueError(
                    f"checkpoint width multiplier {params.width_multiplier} != "
                    f"configured {cfg.width_multiplier}"
                )
            adam = _restore_optimizer(extra, cfg)
            start = adam.t
            last_saved = ckpt
            log.info("resuming from %s at iteration %d", ckpt.name, start)

    log_path = cfg.out_dir / "train_log.csv"
    loss_cols = ",".join(f"L{k}" for k in range(1, cfg.steps + 1))
    mode = "a" if start > 0 and log_path.exists() else "w"
    last_loss = float("nan")

    with open(log_path, mode) as log_file:
        if mode == "w":
            log_file.write(f"iter,L,{loss_cols},psnr_holdout,ms_per_iter\n")
        for it in range(start, cfg.max_iterations):
            rng = np.random.default_rng((cfg.seed, it))
            frames, sharp = sample_batch(
                train_samples,
                cfg.batch_size,
                rng,
                steps=cfg.steps,
                psf_on_the_fly=cfg.psf_on_the_fly,
                psf_sizes=cfg.psf_sizes,
                shake_mag=cfg.shake_mag,
            )
            t0 = time.perf_counter()
            try:
                stats = train_step(params, frames, sharp, adam)
            except TrainDivergence as exc:
                log.error("iteration %d: %s; halting, last checkpoint: %s", it, exc, last_saved)
                return TrainResult("halted", it, last_saved, log_path, last_loss)
            elapsed_ms = (time.perf_counter() - t0) * 1e3

            hold = ""
            if held and (it + 1) % cfg.psnr_every == 0:
                hold = f"{_holdout_psnr(params, held, cfg.steps):.6f}"
            timing = f"{elapsed_ms:.3f}" if cfg.log_timing else ""
            per_step = ",".join(f"{v:.17g}" for v in stats.step_losses)
            log_file.write(f"{it},{stats.loss:.17g},{per_step},{hold},{timing}\n")
            last_loss = stats.loss

            if (it + 1) % cfg.checkpoint_every == 0 and (it + 1) < cfg.max_iterations:
                last_saved = cfg.out_dir / f"checkpoint_{it + 1:06d}.ckpt"
                save_checkpoint(params, last_saved, extra=_optimizer_extras(adam))

    final = cfg.out_dir / "checkpoint_final.ckpt"
    save_checkpoint(params, final, extra=_optimizer_extras(adam))
    return TrainResult("completed", cfg.max_iterations, final, log_path, last_loss)
