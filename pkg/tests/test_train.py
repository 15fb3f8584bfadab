"""Training loop: batching, updates, checkpoint cadence, resume, divergence."""

import csv
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from rdn.data import TrainingSample, save_sample
from rdn.model import init_params, load_checkpoint
from rdn.nn import AdamState
from rdn.train import (
    TrainConfig,
    TrainDivergence,
    TrainResult,
    load_corpus,
    sample_batch,
    train_loop,
    train_step,
)

WM = Fraction(1, 16)
SIZE = 16


def make_sample(rng: np.random.Generator) -> TrainingSample:
    blurry = [rng.random((3, SIZE, SIZE)).astype(np.float32) for _ in range(5)]
    sharp = rng.random((3, SIZE, SIZE)).astype(np.float32)
    return TrainingSample(blurry, sharp, {"source": "handmade"})


def write_corpus(out_dir: Path, count: int, seed: int = 7) -> list[TrainingSample]:
    rng = np.random.default_rng(seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = []
    for i in range(count):
        s = make_sample(rng)
        save_sample(out_dir / f"sample_{i:06d}.rdns", s)
        samples.append(s)
    return samples


@pytest.fixture(scope="module")
def corpus(tmp_path_factory) -> tuple[Path, list[TrainingSample]]:
    root = tmp_path_factory.mktemp("corpus")
    return root, write_corpus(root, 4)


def base_config(corpus_dir: Path, out_dir: Path, **kw) -> TrainConfig:
    defaults = dict(
        width_multiplier=WM,
        batch_size=2,
        steps=2,
        max_iterations=6,
        checkpoint_every=2,
        psnr_every=2,
        log_timing=False,
        seed=3,
    )
    defaults.update(kw)
    return TrainConfig(corpus_dir, out_dir, **defaults)


class TestTrainConfig:
    @pytest.mark.parametrize("steps", [0, 5])
    def test_steps_out_of_range(self, tmp_path, steps):
        with pytest.raises(ValueError, match="steps"):
            TrainConfig(tmp_path, tmp_path, steps=steps)

    def test_batch_size_positive(self, tmp_path):
        with pytest.raises(ValueError, match="batch_size"):
            TrainConfig(tmp_path, tmp_path, batch_size=0)

    def test_checkpoint_every_positive(self, tmp_path):
        with pytest.raises(ValueError):
            TrainConfig(tmp_path, tmp_path, checkpoint_every=0)

    def test_width_multiplier_coerced(self, tmp_path):
        cfg = TrainConfig(tmp_path, tmp_path, width_multiplier="1/8")
        assert cfg.width_multiplier == Fraction(1, 8)


class TestSampleBatch:
    def test_shapes_and_single_sample(self, corpus):
        _, samples = corpus
        frames, sharp = sample_batch(samples[:1], 3, np.random.default_rng(0), steps=4)
        assert len(frames) == 5
        assert all(f.shape == (3, 3, SIZE, SIZE) for f in frames)
        assert sharp.shape == (3, 3, SIZE, SIZE)
        # only one sample to draw, so every slot is that sample
        for k in range(5):
            for b in range(3):
                np.testing.assert_array_equal(frames[k][b], samples[0].blurry[k])

    def test_deterministic_given_rng_seed(self, corpus):
        _, samples = corpus
        a_frames, a_sharp = sample_batch(samples, 4, np.random.default_rng(11), steps=2)
        b_frames, b_sharp = sample_batch(samples, 4, np.random.default_rng(11), steps=2)
        np.testing.assert_array_equal(a_sharp, b_sharp)
        for fa, fb in zip(a_frames, b_frames):
            np.testing.assert_array_equal(fa, fb)

    def test_on_the_fly_blur_changes_frames_not_sharp(self, corpus):
        """Fresh kernels perturb the blurry stack but ground truth is untouched."""
        _, samples = corpus
        plain_frames, plain_sharp = sample_batch(
            samples[:1], 2, np.random.default_rng(5), steps=2
        )
        psf_frames, psf_sharp = sample_batch(
            samples[:1], 2, np.random.default_rng(5), steps=2, psf_on_the_fly=True
        )
        np.testing.assert_array_equal(plain_sharp, psf_sharp)
        assert not any(
            np.array_equal(pf, qf) for pf, qf in zip(plain_frames, psf_frames)
        )

    def test_empty_corpus(self):
        with pytest.raises(ValueError, match="empty"):
            sample_batch([], 2, np.random.default_rng(0))


class TestTrainStep:
    def batch(self, steps=2, batch=2, seed=0):
        rng = np.random.default_rng(seed)
        frames = [rng.random((batch, 3, SIZE, SIZE)).astype(np.float32) for _ in range(steps + 1)]
        sharp = rng.random((batch, 3, SIZE, SIZE)).astype(np.float32)
        return frames, sharp

    def test_zero_lr_leaves_params_unchanged(self):
        params = init_params(WM, seed=0)
        before = {k: t.data.copy() for k, t in params.trainable().items()}
        frames, sharp = self.batch()
        stats = train_step(params, frames, sharp, AdamState(lr=0.0))
        assert np.isfinite(stats.loss)
        assert len(stats.step_losses) == 2
        for k, t in params.trainable().items():
            np.testing.assert_array_equal(t.data, before[k])

    def test_update_touches_every_parameter(self):
        params = init_params(WM, seed=0)
        before = {k: t.data.copy() for k, t in params.trainable().items()}
        frames, sharp = self.batch(steps=2)
        train_step(params, frames, sharp, AdamState(lr=5e-3))
        for k, t in params.trainable().items():
            assert not np.array_equal(t.data, before[k]), f"{k} never moved"

    def test_single_step_skips_blend_layers(self):
        """One recurrence step never links temporal features, so blends sit still."""
        params = init_params(WM, seed=0)
        before = {k: t.data.copy() for k, t in params.trainable().items()}
        frames, sharp = self.batch(steps=1)
        train_step(params, frames, sharp, AdamState(lr=5e-3))
        moved = {k for k, t in params.trainable().items() if not np.array_equal(t.data, before[k])}
        assert not any(k.startswith("blend") for k in moved)
        assert any(k.startswith("enc") for k in moved)

    def test_poisoned_params_raise_divergence(self):
        params = init_params(WM, seed=0)
        params.layers["a01"].weight.data[0, 0, 0, 0] = np.inf
        frames, sharp = self.batch()
        with pytest.raises(TrainDivergence):
            train_step(params, frames, sharp, AdamState(lr=5e-3))


class TestTrainLoop:
    def test_completed_run_artifacts(self, corpus, tmp_path):
        corpus_dir, _ = corpus
        cfg = base_config(corpus_dir, tmp_path / "run", log_timing=True)
        result = train_loop(cfg)
        assert isinstance(result, TrainResult)
        assert result.status == "completed"
        assert result.iterations == 6
        assert np.isfinite(result.final_loss)
        assert result.checkpoint == cfg.out_dir / "checkpoint_final.ckpt"

        names = sorted(p.name for p in cfg.out_dir.glob("*.ckpt"))
        # every two iterations, except the last which the final file covers
        assert names == ["checkpoint_000002.ckpt", "checkpoint_000004.ckpt", "checkpoint_final.ckpt"]

        with open(result.log_path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["iter", "L", "L1", "L2", "psnr_holdout", "ms_per_iter"]
        assert len(rows) == 1 + 6
        assert [r[0] for r in rows[1:]] == [str(i) for i in range(6)]
        losses = [float(r[1]) for r in rows[1:]]
        assert all(np.isfinite(v) for v in losses)
        # timing on: the last column is populated
        assert all(float(r[-1]) > 0 for r in rows[1:])

    def test_runs_are_reproducible(self, corpus, tmp_path):
        corpus_dir, _ = corpus
        cfg_a = base_config(corpus_dir, tmp_path / "a")
        cfg_b = base_config(corpus_dir, tmp_path / "b")
        res_a = train_loop(cfg_a)
        res_b = train_loop(cfg_b)
        assert res_a.log_path.read_bytes() == res_b.log_path.read_bytes()
        assert res_a.checkpoint.read_bytes() == res_b.checkpoint.read_bytes()

    def test_resume_matches_uninterrupted_run(self, corpus, tmp_path):
        """Stop at 3, pick the run back up to 6: bytes match a straight 6."""
        corpus_dir, _ = corpus
        split = base_config(corpus_dir, tmp_path / "split", max_iterations=3)
        train_loop(split)
        split.max_iterations = 6
        resumed = train_loop(split)
        assert resumed.status == "completed"

        straight = base_config(corpus_dir, tmp_path / "straight")
        reference = train_loop(straight)
        assert resumed.checkpoint.read_bytes() == reference.checkpoint.read_bytes()
        assert resumed.log_path.read_bytes() == reference.log_path.read_bytes()

    def test_resume_after_completion_is_a_no_op(self, corpus, tmp_path):
        corpus_dir, _ = corpus
        cfg = base_config(corpus_dir, tmp_path / "run")
        first = train_loop(cfg)
        before = first.checkpoint.read_bytes()
        again = train_loop(cfg)
        assert again.status == "completed"
        assert again.checkpoint.read_bytes() == before

    def test_resume_rejects_other_width(self, corpus, tmp_path):
        corpus_dir, _ = corpus
        cfg = base_config(corpus_dir, tmp_path / "run", max_iterations=2)
        train_loop(cfg)
        wider = base_config(corpus_dir, tmp_path / "run", width_multiplier=Fraction(1, 8))
        with pytest.raises(ValueError, match="width multiplier"):
            train_loop(wider)

    def test_holdout_psnr_cadence(self, corpus, tmp_path):
        corpus_dir, _ = corpus
        cfg = base_config(
            corpus_dir, tmp_path / "run", holdout=2, psnr_every=2, max_iterations=4
        )
        result = train_loop(cfg)
        with open(result.log_path) as fh:
            rows = list(csv.DictReader(fh))
        assert [r["psnr_holdout"] != "" for r in rows] == [False, True, False, True]
        assert all(float(r["psnr_holdout"]) > 0 for r in rows if r["psnr_holdout"])

    def test_holdout_out_of_range(self, corpus, tmp_path):
        corpus_dir, _ = corpus
        cfg = base_config(corpus_dir, tmp_path / "run", holdout=4)
        with pytest.raises(ValueError, match="holdout"):
            train_loop(cfg)

    def test_empty_corpus_dir(self, tmp_path):
        (tmp_path / "nothing").mkdir()
        cfg = base_config(tmp_path / "nothing", tmp_path / "run")
        with pytest.raises(FileNotFoundError, match="sample"):
            train_loop(cfg)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_halts_with_last_checkpoint(self, corpus, tmp_path):
        """An exploding run stops cleanly and leaves a loadable checkpoint behind."""
        corpus_dir, _ = corpus
        cfg = base_config(
            corpus_dir,
            tmp_path / "run",
            lr=1e30,
            checkpoint_every=1,
            max_iterations=10,
        )
        result = train_loop(cfg)
        assert result.status == "halted"
        assert 0 < result.iterations < 10
        assert result.checkpoint is not None and result.checkpoint.exists()
        params, extra = load_checkpoint(result.checkpoint)
        assert params.width_multiplier == WM
        assert int(extra["opt.t"]) == result.iterations

    def test_corpus_loads_in_name_order(self, corpus):
        corpus_dir, written = corpus
        loaded = load_corpus(corpus_dir)
        assert len(loaded) == len(written)
        for got, want in zip(loaded, written):
            np.testing.assert_array_equal(got.sharp, want.sharp)
