"""End-to-end synthesis of blurry/sharp training pairs from sharp frame clips.

Pipeline per admissible target frame t (needs source frames t-5 .. t+1):

    ingest PNGs -> auto area-downscale -> sharpness gate -> per-gap flows
    -> subframe interpolation -> temporal averaging into 5 blurry frames
    -> one common random crop -> independent random shake PSF per blurry frame

The sharp ground truth is the cropped target frame itself, untouched by any
PSF, so it stays pixel-aligned with the pre-shake content of ``blurry[0]``.

Every random choice for a sample comes from an RNG seeded by (seed, clip,
frame index), which makes the corpus a pure function of (inputs, seed) no
matter how many workers run or in which order they finish.
"""

from __future__ import annotations

import json
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from ..frames import load_frame
from ..resample import area_downscale
from .blur import average_blur, sharpness_score
from .flow import FlowField, estimate_flow
from .psf import apply_psf, sample_psf
from .warp import _subframe_at_alpha

__all__ = [
    "ForgeConfig",
    "SubframeSpec",
    "TrainingSample",
    "forge_corpus",
    "list_samples",
    "load_sample",
    "make_samples",
    "save_sample",
]

log = logging.getLogger(__name__)

SAMPLE_MAGIC = b"RDNS"
SAMPLE_VERSION = 1


@dataclass(frozen=True)
class SubframeSpec:
    """How densely to interpolate (n per gap) and how wide to average (L)."""

    n: int = 40
    L: int = 20

    def __post_init__(self) -> None:
        if not 1 <= self.L <= self.n:
            raise ValueError(f"need 1 <= L <= n, got L={self.L}, n={self.n}")


@dataclass
class TrainingSample:
    blurry: list[np.ndarray]  # 5 x (3, crop, crop) float32 in [0, 1]
    sharp: np.ndarray  # (3, crop, crop) float32, aligned with blurry[0]
    provenance: dict


@dataclass
class ForgeConfig:
    in_dir: Path
    out_dir: Path
    n: int = 40
    L_choices: tuple[int, ...] = (20, 40)
    crop: int = 128
    psf_sizes: tuple[int, ...] = (7, 11, 15)
    shake_mag: float = 1.0
    seed: int = 0
    workers: int = 1
    sharpness_threshold: float = 1e-3

    def __post_init__(self) -> None:
        self.in_dir = Path(self.in_dir)
        self.out_dir = Path(self.out_dir)
        for L in self.L_choices:
            SubframeSpec(self.n, L)
        if self.crop % 8 != 0:
            raise ValueError(f"crop size must be a multiple of 8, got {self.crop}")


# ---------------------------------------------------------------------------
# sample container


def save_sample(path, sample: TrainingSample) -> None:
    tensors = [*sample.blurry, sample.sharp]
    if len(tensors) != 6:
        raise ValueError(f"sample must hold 5 blurry + 1 sharp, got {len(sample.blurry)} blurry")
    blob = bytearray()
    blob += SAMPLE_MAGIC
    blob += struct.pack("<I", SAMPLE_VERSION)
    for t in tensors:
        arr = np.asarray(t, dtype="<f4")
        if arr.ndim != 3:
            raise ValueError(f"sample tensors must be (c, h, w), got shape {arr.shape}")
        blob += struct.pack("<III", *arr.shape)
        blob += arr.tobytes()
    meta = json.dumps(sample.provenance, sort_keys=True).encode("utf-8")
    blob += struct.pack("<I", len(meta)) + meta
    Path(path).write_bytes(bytes(blob))


def load_sample(path) -> TrainingSample:
    blob = Path(path).read_bytes()
    if blob[:4] != SAMPLE_MAGIC:
        raise ValueError(f"{path}: not a training sample file")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != SAMPLE_VERSION:
        raise ValueError(f"{path}: unsupported sample version {version}")
    off = 8
    tensors = []
    for _ in range(6):
        c, h, w = struct.unpack_from("<III", blob, off)
        off += 12
        n = c * h * w * 4
        tensors.append(np.frombuffer(blob, dtype="<f4", count=c * h * w, offset=off).reshape(c, h, w).copy())
        off += n
    (meta_len,) = struct.unpack_from("<I", blob, off)
    off += 4
    provenance = json.loads(blob[off : off + meta_len].decode("utf-8"))
    return TrainingSample(blurry=tensors[:5], sharp=tensors[5], provenance=provenance)


def list_samples(corpus_dir) -> list[Path]:
    return sorted(Path(corpus_dir).glob("sample_*.rdns"))


# ---------------------------------------------------------------------------
# clip ingestion


def _discover_clips(in_dir: Path) -> list[tuple[str, list[Path]]]:
    own = sorted(in_dir.glob("frame_*.png"))
    if own:
        return [(in_dir.name, own)]
    clips = []
    for sub in sorted(p for p in in_dir.iterdir() if p.is_dir()):
        frames = sorted(sub.glob("frame_*.png"))
        if frames:
            clips.append((sub.name, frames))
    if not clips:
        raise ValueError(f"no frame_*.png files found under {in_dir}")
    return clips


def _ingest_clip(paths: list[Path], crop: int) -> tuple[list[np.ndarray], int]:
    frames = [load_frame(p).astype(np.float64) for p in paths]
    h, w = frames[0].shape[-2:]
    for p, f in zip(paths, frames):
        if f.shape != frames[0].shape:
            raise ValueError(f"{p}: frame shape {f.shape} differs from {frames[0].shape}")
    factor = min(h // crop, w // crop)
    if factor < 1:
        raise ValueError(f"frames are {h}x{w}, smaller than the {crop}px crop window")
    if factor > 1:
        frames = [area_downscale(f, factor) for f in frames]
    return frames, factor


# ---------------------------------------------------------------------------
# per-target synthesis


def _blur_five(
    frames: list[np.ndarray],
    flows: dict[int, tuple[FlowField, FlowField]],
    t: int,
    spec: SubframeSpec,
) -> dict[int, np.ndarray]:
    """Blurry versions of frames t-4 .. t; gap caches live only while needed."""
    n, L = spec.n, spec.L
    cache: dict[int, dict[int, np.ndarray]] = {}

    def sub(gap: int, m: int) -> np.ndarray:
        if m == 0:
            return frames[gap]  # alpha = 0 degenerates to the left frame
        slot = cache.setdefault(gap, {})
        if m not in slot:
            fwd, bwd = flows[gap]
            slot[m] = _subframe_at_alpha(frames[gap], frames[gap + 1], fwd, bwd, m / (n + 1))
        return slot[m]

    blurs = {}
    for j in range(t - 4, t + 1):
        preceding = [sub(j - 1, n - l) for l in range(1, L + 1)]
        following = [sub(j, l) for l in range(1, L + 1)]
        blurs[j] = average_blur(frames[j], preceding, following, L)
        cache.pop(j - 1, None)
    return blurs


def _synthesize_target(
    clip_id: str,
    frames: list[np.ndarray],
    flows: dict[int, tuple[FlowField, FlowField]],
    t: int,
    cfg: ForgeConfig,
    downscale: int,
) -> TrainingSample:
    rng = np.random.default_rng((cfg.seed, _clip_key(clip_id), t))
    L = int(cfg.L_choices[rng.integers(len(cfg.L_choices))])
    h, w = frames[0].shape[-2:]
    y0 = int(rng.integers(0, h - cfg.crop + 1))
    x0 = int(rng.integers(0, w - cfg.crop + 1))
    psf_sizes = [int(s) for s in rng.choice(np.asarray(cfg.psf_sizes), size=5)]
    psf_seeds = [int(s) for s in rng.integers(0, 2**63, size=5)]

    blurs = _blur_five(frames, flows, t, SubframeSpec(cfg.n, L))
    window = (slice(y0, y0 + cfg.crop), slice(x0, x0 + cfg.crop))

    blurry = []
    for k in range(5):  # blurry[k] is the blur of frame t-k, nearest first
        b = np.ascontiguousarray(blurs[t - k][(...,) + window])
        kern = sample_psf(psf_sizes[k], psf_seeds[k], shake_mag=cfg.shake_mag)
        b = apply_psf(b, kern)
        blurry.append(np.clip(b, 0.0, 1.0).astype(np.float32))
    sharp = np.clip(frames[t][(...,) + window], 0.0, 1.0).astype(np.float32)

    provenance = {
        "source": clip_id,
        "frame": t,
        "crop": [y0, x0, cfg.crop],
        "downscale": downscale,
        "n": cfg.n,
        "L": L,
        "shake_mag": cfg.shake_mag,
        "psf": [{"size": s, "seed": seed} for s, seed in zip(psf_sizes, psf_seeds)],
    }
    return TrainingSample(blurry=blurry, sharp=sharp, provenance=provenance)


def _clip_key(clip_id: str) -> int:
    # stable small integer for RNG seeding, independent of hash randomisation
    import zlib

    return zlib.crc32(clip_id.encode("utf-8"))


def make_samples(in_dir, cfg: ForgeConfig) -> Iterator[TrainingSample]:
    """Yield training samples for every admissible, sharp-enough target frame."""
    for clip_id, paths in _discover_clips(Path(in_dir)):
        if len(paths) < 6:
            raise ValueError(f"clip {clip_id!r} has {len(paths)} frames; need at least 6")
        frames, factor = _ingest_clip(paths, cfg.crop)
        count = len(frames)
        targets = list(range(5, count - 1))
        if not targets:
            log.warning("clip %r: %d frames admit no target (need t-5..t+1)", clip_id, count)
            continue

        passed = [sharpness_score(f, cfg.sharpness_threshold)[1] for f in frames]
        admissible = []
        for t in targets:
            bad = [j for j in range(t - 5, t + 2) if not passed[j]]
            if bad:
                log.warning("clip %r target %d skipped: frames %s fail sharpness gate", clip_id, t, bad)
            else:
                admissible.append(t)
        if not admissible:
            continue

        gaps = sorted({g for t in admissible for g in range(t - 5, t + 1)})
        flows = {
            g: (
                estimate_flow(frames[g], frames[g + 1], direction="forward"),
                estimate_flow(frames[g + 1], frames[g], direction="backward"),
            )
            for g in gaps
        }

        def build(t: int) -> TrainingSample:
            return _synthesize_target(clip_id, frames, flows, t, cfg, factor)

        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                futures = [pool.submit(build, t) for t in admissible]
                for fut in futures:
                    yield fut.result()
        else:
            for t in admissible:
                yield build(t)


def forge_corpus(cfg: ForgeConfig) -> dict:
    """Run make_samples over the input directory and write corpus + manifest."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for idx, sample in enumerate(make_samples(cfg.in_dir, cfg)):
        name = f"sample_{idx:06d}.rdns"
        save_sample(cfg.out_dir / name, sample)
        names.append(name)

    # Only content-determining fields go into the manifest: invocation details
    # like paths and worker count would break byte-identity between reruns.
    config_dict = {
        k: (list(v) if isinstance(v, tuple) else v)
        for k, v in asdict(cfg).items()
        if k not in ("in_dir", "out_dir", "workers")
    }
    manifest = {
        "format": SAMPLE_MAGIC.decode("ascii"),
        "version": SAMPLE_VERSION,
        "config": config_dict,
        "samples": names,
    }
    (cfg.out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    if not names:
        log.warning("forge produced no samples; check clip length and sharpness gate")
    return manifest
