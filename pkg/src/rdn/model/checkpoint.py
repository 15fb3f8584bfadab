"""Binary checkpoint format.

Layout (all integers little-endian):

    magic "RDN1" | version u32 | wm numerator u32 | wm denominator u32
    entry count u32
    per entry: name length u32 | name utf-8 | rank u32 | dims u32[rank] | dtype tag u8
    raw float32 payloads, in table order
    crc32 u32 over the payload bytes

Entries cover every trainable parameter and the BN running statistics.  Extra
entries (e.g. optimizer state under an ``opt.`` prefix) may ride along; they
are returned separately on load and ignored by inference.
"""

from __future__ import annotations

import struct
import zlib
from fractions import Fraction
from pathlib import Path

import numpy as np

from .params import RdnParams, init_params

MAGIC = b"RDN1"
VERSION = 1
_DTYPE_F32 = 0


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(params: RdnParams, path, extra: dict[str, np.ndarray] | None = None) -> None:
    """Write params (cast to f32) plus optional extra arrays; atomic via temp file."""
    entries: list[tuple[str, np.ndarray]] = []
    for name, arr in params.state_arrays().items():
        entries.append((name, np.asarray(arr, dtype="<f4", order="C")))
    for name, arr in (extra or {}).items():
        # asarray keeps rank-0 entries rank 0 (ascontiguousarray would promote them)
        entries.append((name, np.asarray(arr, dtype="<f4", order="C")))

    head = bytearray()
    head += MAGIC
    head += struct.pack("<III", VERSION, params.width_multiplier.numerator, params.width_multiplier.denominator)
    head += struct.pack("<I", len(entries))
    for name, arr in entries:
        nb = name.encode("utf-8")
        head += struct.pack("<I", len(nb)) + nb
        head += struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        head += struct.pack("<B", _DTYPE_F32)

    payload = b"".join(arr.tobytes() for _, arr in entries)
    crc = zlib.crc32(payload) & 0xFFFFFFFF

    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(bytes(head))
        fh.write(payload)
        fh.write(struct.pack("<I", crc))
    tmp.replace(path)


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path) -> tuple[RdnParams, dict[str, np.ndarray]]:
    """Load a checkpoint; returns (params, extra arrays that were not model state)."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
        version, num, den = struct.unpack("<III", _read_exact(fh, 12, "header"))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        if den == 0:
            raise CheckpointError(f"{path}: width multiplier denominator is zero")
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "entry count"))

        table: list[tuple[str, tuple[int, ...]]] = []
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, nlen, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "dims"))
            (tag,) = struct.unpack("<B", _read_exact(fh, 1, "dtype tag"))
            if tag != _DTYPE_F32:
                raise CheckpointError(f"{path}: unknown dtype tag {tag} for {name!r}")
            table.append((name, dims))

        arrays: dict[str, np.ndarray] = {}
        payload_crc = 0
        for name, dims in table:
            nbytes = 4 * int(np.prod(dims, dtype=np.int64))
            raw = _read_exact(fh, nbytes, f"payload of {name!r}")
            payload_crc = zlib.crc32(raw, payload_crc)
            arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
        (crc,) = struct.unpack("<I", _read_exact(fh, 4, "checksum"))
        if crc != payload_crc & 0xFFFFFFFF:
            raise CheckpointError(f"{path}: payload checksum mismatch")

    params = init_params(Fraction(num, den), seed=0, dtype=np.float32)
    expected = params.state_arrays()
    extra: dict[str, np.ndarray] = {}
    for name, arr in arrays.items():
        if name in expected:
            if expected[name].shape != arr.shape:
                raise CheckpointError(
                    f"{path}: shape table disagreement for {name!r}: "
                    f"file has {arr.shape}, model needs {expected[name].shape}"
                )
            expected[name][...] = arr
        else:
            extra[name] = arr
    missing = [n for n in expected if n not in arrays]
    if missing:
        raise CheckpointError(f"{path}: missing entries {missing[:3]}{'...' if len(missing) > 3 else ''}")
    return params, extra
