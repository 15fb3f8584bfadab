"""Command-line front end: forge a corpus, train, and deblur sequences."""

from __future__ import annotations

import argparse
import glob
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

from .data import ForgeConfig, forge_corpus
from .frames import load_frames, save_frame
from .infer import InferConfig, Report, deblur_sequence, multiscale_infer, psnr, tile_infer
from .model import load_checkpoint
from .train import TrainConfig, train_loop


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rdn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    f = sub.add_parser("forge", help="synthesize blurry/sharp training pairs from sharp clips")
    f.add_argument("--in", dest="in_dir", required=True, type=Path)
    f.add_argument("--out", dest="out_dir", required=True, type=Path)
    f.add_argument("--n", type=int, default=40, help="subframes per frame gap")
    f.add_argument("--L", type=_int_list, default=(20, 40), help="averaging half-windows, e.g. 20,40")
    f.add_argument("--crop", type=int, default=128)
    f.add_argument("--psf", type=_int_list, default=(7, 11, 15), help="shake kernel sizes")
    f.add_argument("--shake-mag", type=float, default=1.0)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--workers", type=int, default=1)
    f.set_defaults(func=cmd_forge)

    t = sub.add_parser("train", help="train the recurrent deblur network on a forged corpus")
    t.add_argument("--corpus", required=True, type=Path)
    t.add_argument("--out", dest="out_dir", required=True, type=Path)
    t.add_argument("--wm", type=Fraction, default=Fraction(1, 8), help="width multiplier, e.g. 1/8")
    t.add_argument("--batch", type=int, default=4)
    t.add_argument("--steps", type=int, default=4)
    t.add_argument("--lr", type=float, default=5e-3)
    t.add_argument("--iters", type=int, default=1000)
    t.add_argument("--checkpoint-every", type=int, default=100)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--holdout", type=int, default=0)
    t.add_argument("--psf-on-the-fly", action="store_true")
    t.add_argument("--psf", type=_int_list, default=(7, 11, 15))
    t.add_argument("--shake-mag", type=float, default=1.0)
    t.add_argument("--no-timing", action="store_true", help="omit wall-clock column (byte-stable logs)")
    t.add_argument("--fresh", action="store_true", help="ignore existing checkpoints in --out")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("deblur", help="deblur the first frame of a sequence with a checkpoint")
    d.add_argument("--ckpt", required=True, type=Path)
    d.add_argument("--frames", required=True, help="glob for input frames, nearest first")
    d.add_argument("--out", dest="out_dir", required=True, type=Path)
    d.add_argument("--max-frames", type=int, default=None)
    d.add_argument("--tile", type=int, default=None)
    d.add_argument("--overlap", type=int, default=64)
    d.add_argument("--multiscale", type=int, default=1)
    d.add_argument("--ref", default=None, help="glob for sharp references (enables PSNR report)")
    d.add_argument("--dump-steps", action="store_true")
    d.set_defaults(func=cmd_deblur)
    return parser


def cmd_forge(args) -> int:
    cfg = ForgeConfig(
        in_dir=args.in_dir,
        out_dir=args.out_dir,
        n=args.n,
        L_choices=args.L,
        crop=args.crop,
        psf_sizes=args.psf,
        shake_mag=args.shake_mag,
        seed=args.seed,
        workers=args.workers,
    )
    manifest = forge_corpus(cfg)
    print(f"forged {len(manifest['samples'])} samples into {args.out_dir}")
    return 0


def cmd_train(args) -> int:
    cfg = TrainConfig(
        corpus_dir=args.corpus,
        out_dir=args.out_dir,
        width_multiplier=args.wm,
        batch_size=args.batch,
        steps=args.steps,
        lr=args.lr,
        max_iterations=args.iters,
        checkpoint_every=args.checkpoint_every,
        seed=args.seed,
        holdout=args.holdout,
        psf_on_the_fly=args.psf_on_the_fly,
        psf_sizes=args.psf,
        shake_mag=args.shake_mag,
        log_timing=not args.no_timing,
    )
    result = train_loop(cfg, resume=not args.fresh)
    print(
        f"training {result.status} after {result.iterations} iterations; "
        f"loss {result.final_loss:.6g}; checkpoint: {result.checkpoint}"
    )
    return 0 if result.status == "completed" else 3


def cmd_deblur(args) -> int:
    if args.tile is not None and args.multiscale > 1:
        raise ValueError("--tile and --multiscale cannot be combined")
    paths = [Path(p) for p in sorted(glob.glob(args.frames))]
    if not paths:
        raise FileNotFoundError(f"no frames match {args.frames!r}")
    cfg = InferConfig(
        tile_size=args.tile if args.tile is not None else 256,
        overlap=args.overlap,
        multiscale_levels=args.multiscale,
        checkpoint=args.ckpt,
        frames=paths,
        max_frames=args.max_frames,
        out_dir=args.out_dir,
    )
    if cfg.max_frames is not None:
        paths = paths[: cfg.max_frames]
    frames = load_frames(paths)
    params, _ = load_checkpoint(cfg.checkpoint)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    steps = []
    timings: list[float] = []
    t0 = time.perf_counter()
    if args.tile is not None:
        final = tile_infer(frames, params, cfg)
    elif args.multiscale > 1:
        final = multiscale_infer(frames, params, cfg.multiscale_levels)
    else:
        steps = deblur_sequence(frames, params, timings_ms=timings)
        final = steps[-1]
    if not timings:  # tiled/multiscale paths: report the run as one step
        timings = [(time.perf_counter() - t0) * 1e3]

    save_frame(args.out_dir / "prediction.png", final)
    if args.dump_steps:
        for i, step in enumerate(steps, start=1):
            save_frame(args.out_dir / f"step_{i:02d}.png", step)

    report = Report(steps=len(frames) - 1, ms_per_step=[round(t, 3) for t in timings])
    if args.ref:
        ref_paths = sorted(glob.glob(args.ref))
        if not ref_paths:
            raise FileNotFoundError(f"no reference frames match {args.ref!r}")
        ref = load_frames(ref_paths)[0]
        report.psnr_per_frame = [psnr(s, ref) for s in steps] if steps else [psnr(final, ref)]
    payload = {
        "steps": report.steps,
        "output": str(args.out_dir / "prediction.png"),
        "ms_per_step": report.ms_per_step,
    }
    if args.ref:
        payload["psnr"] = report.psnr_per_frame
    print(json.dumps(payload, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        if args.command == "deblur":
            print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
