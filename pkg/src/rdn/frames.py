"""8-bit RGB PNG frame IO.

Frames travel through the pipeline as float arrays shaped (3, h, w) in [0, 1].
Saving quantises with round-half-away-from-zero, so a save/load round trip
moves any channel value by at most 1/510.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

__all__ = ["load_frame", "load_frames", "save_frame", "save_frames"]

_PNG_SIG = b"\x89PNG\r\n\x1a\n"


def _reject_16bit_png(path: Path) -> None:
    # Pillow quietly downconverts 48-bit RGB PNGs; inspect the IHDR bit-depth
    # byte directly so 16-bit inputs fail loudly instead.
    with open(path, "rb") as fh:
        head = fh.read(25)
    if head[:8] == _PNG_SIG and len(head) == 25 and head[24] == 16:
        raise ValueError(f"{path}: 16-bit PNG is not supported; convert to 8-bit RGB")


def load_frame(path) -> np.ndarray:
    """Decode one 8-bit RGB image to float32 (3, h, w) in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"frame not found: {path}")
    _reject_16bit_png(path)
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


def load_frames(paths: Sequence) -> list[np.ndarray]:
    frames = [load_frame(p) for p in paths]
    if not frames:
        raise ValueError("no frames to load")
    first = frames[0].shape
    for p, f in zip(paths, frames):
        if f.shape != first:
            raise ValueError(f"{p}: frame shape {f.shape} differs from first frame {first}")
    return frames


def save_frame(path, tensor: np.ndarray) -> None:
    """Write a (3, h, w) float array in [0, 1] as 8-bit RGB PNG.

    Values are clamped, then rounded half away from zero (floor(x*255 + 0.5)
    on the non-negative clamped range).
    """
    if tensor.ndim != 3 or tensor.shape[0] != 3:
        raise ValueError(f"expected (3, h, w) tensor, got shape {tensor.shape}")
    clamped = np.clip(tensor.astype(np.float64), 0.0, 1.0)
    quant = np.floor(clamped * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(quant.transpose(1, 2, 0), mode="RGB").save(Path(path), format="PNG")


def save_frames(out_dir, tensors: Sequence[np.ndarray], template: str = "frame_%06d.png") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, t in enumerate(tensors):
        p = out_dir / (template % i)
        save_frame(p, t)
        paths.append(p)
    return paths
