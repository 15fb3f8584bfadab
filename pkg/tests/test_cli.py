"""Command-line surface: argument wiring, outputs on disk, JSON reporting."""

import json
from fractions import Fraction

import numpy as np
import pytest

from rdn.cli import main
from rdn.frames import save_frame
from rdn.model import init_params, save_checkpoint


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "model.ckpt"
    save_checkpoint(init_params(Fraction(1, 16), seed=0), path)
    return path


@pytest.fixture(scope="module")
def frame_dir(tmp_path_factory):
    """Three noisy 32x32 frames plus a reference, all PNG."""
    d = tmp_path_factory.mktemp("frames")
    rng = np.random.default_rng(0)
    for i in range(3):
        save_frame(d / f"frame_{i:02d}.png", rng.random((3, 32, 32)).astype(np.float32))
    save_frame(d / "ref.png", rng.random((3, 32, 32)).astype(np.float32))
    return d


def run_deblur(capsys, checkpoint, frame_dir, out, *extra) -> tuple[int, dict]:
    code = main(
        [
            "deblur",
            "--ckpt", str(checkpoint),
            "--frames", str(frame_dir / "frame_*.png"),
            "--out", str(out),
            *extra,
        ]
    )
    captured = capsys.readouterr()
    payload = json.loads(captured.out) if captured.out else {}
    return code, payload


class TestDeblurCommand:
    def test_writes_prediction_and_report(self, capsys, checkpoint, frame_dir, tmp_path):
        code, report = run_deblur(capsys, checkpoint, frame_dir, tmp_path)
        assert code == 0
        assert (tmp_path / "prediction.png").exists()
        assert report["steps"] == 2
        assert len(report["ms_per_step"]) == 2
        assert "psnr" not in report

    def test_dump_steps(self, capsys, checkpoint, frame_dir, tmp_path):
        code, _ = run_deblur(capsys, checkpoint, frame_dir, tmp_path, "--dump-steps")
        assert code == 0
        assert (tmp_path / "step_01.png").exists()
        assert (tmp_path / "step_02.png").exists()

    def test_reference_enables_psnr(self, capsys, checkpoint, frame_dir, tmp_path):
        code, report = run_deblur(
            capsys, checkpoint, frame_dir, tmp_path, "--ref", str(frame_dir / "ref.png")
        )
        assert code == 0
        assert len(report["psnr"]) == report["steps"] == 2
        assert all(np.isfinite(v) for v in report["psnr"])

    def test_max_frames_truncates(self, capsys, checkpoint, frame_dir, tmp_path):
        code, report = run_deblur(capsys, checkpoint, frame_dir, tmp_path, "--max-frames", "2")
        assert code == 0
        assert report["steps"] == 1

    @pytest.mark.filterwarnings("ignore:overlap")
    def test_tiled_path(self, capsys, checkpoint, frame_dir, tmp_path):
        code, report = run_deblur(
            capsys, checkpoint, frame_dir, tmp_path, "--tile", "16", "--overlap", "8"
        )
        assert code == 0
        assert (tmp_path / "prediction.png").exists()
        assert len(report["ms_per_step"]) == 1

    def test_multiscale_path(self, capsys, checkpoint, frame_dir, tmp_path):
        code, report = run_deblur(capsys, checkpoint, frame_dir, tmp_path, "--multiscale", "2")
        assert code == 0
        assert report["steps"] == 2

    def test_tile_and_multiscale_conflict(self, capsys, checkpoint, frame_dir, tmp_path):
        code = main(
            [
                "deblur",
                "--ckpt", str(checkpoint),
                "--frames", str(frame_dir / "frame_*.png"),
                "--out", str(tmp_path),
                "--tile", "16",
                "--multiscale", "2",
            ]
        )
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ValueError"
        assert "combined" in err["message"]

    def test_empty_glob_reports_json_error(self, capsys, checkpoint, tmp_path):
        code = main(
            [
                "deblur",
                "--ckpt", str(checkpoint),
                "--frames", str(tmp_path / "nothing_*.png"),
                "--out", str(tmp_path),
            ]
        )
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "FileNotFoundError"


class TestForgeTrainPipeline:
    def test_forge_then_train_then_deblur(self, capsys, tmp_path):
        """The three subcommands chain into a working end-to-end run."""
        clip = tmp_path / "clips" / "pan"
        clip.mkdir(parents=True)
        rng = np.random.default_rng(1)
        texture = rng.random((3, 40, 52)).astype(np.float32)
        for i in range(7):
            save_frame(clip / f"frame_{i:02d}.png", np.roll(texture, shift=i, axis=2))

        corpus = tmp_path / "corpus"
        code = main(
            [
                "forge",
                "--in", str(tmp_path / "clips"),
                "--out", str(corpus),
                "--n", "4",
                "--L", "2",
                "--crop", "24",
                "--psf", "5",
                "--seed", "1",
            ]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "forged 1 samples" in out
        assert (corpus / "manifest.json").exists()

        run = tmp_path / "run"
        code = main(
            [
                "train",
                "--corpus", str(corpus),
                "--out", str(run),
                "--wm", "1/16",
                "--batch", "1",
                "--steps", "2",
                "--iters", "2",
                "--checkpoint-every", "5",
                "--no-timing",
            ]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "completed" in out
        ckpt = run / "checkpoint_final.ckpt"
        assert ckpt.exists()

        result = tmp_path / "deblurred"
        code = main(
            [
                "deblur",
                "--ckpt", str(ckpt),
                "--frames", str(clip / "frame_*.png"),
                "--out", str(result),
                "--max-frames", "3",
            ]
        )
        report = json.loads(capsys.readouterr().out)
        assert code == 0
        assert report["steps"] == 2
        assert (result / "prediction.png").exists()


class TestParser:
    def test_help_lists_subcommands(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        assert "forge" in out and "train" in out and "deblur" in out

    def test_train_error_is_plain_text(self, capsys, tmp_path):
        code = main(
            ["train", "--corpus", str(tmp_path), "--out", str(tmp_path / "run")]
        )
        assert code == 2
        err = capsys.readouterr().err
        assert err.startswith("error:")
