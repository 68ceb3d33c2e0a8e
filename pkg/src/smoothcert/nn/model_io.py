"""Binary model serialization.

Layout (all little-endian): magic "DSMK", u16 version=1, u32 length +
UTF-8 canonical architecture descriptor, u32 parameter count, then per
parameter: u16 name length + UTF-8 name, u8 rank, rank u32 extents, and
the raw float64 data.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .model import Model, model_from_descriptor

MAGIC = b"DSMK"
VERSION = 1


def save_model(model: Model, path: str | Path) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", VERSION))
    descriptor = model.descriptor().encode("utf-8")
    buf.write(struct.pack("<I", len(descriptor)))
    buf.write(descriptor)
    buf.write(struct.pack("<I", len(model.params)))
    for name, arr in model.params.items():
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def _read(stream: io.BytesIO, size: int, what: str) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise FormatError(f"truncated model file while reading {what}")
    return data


def load_model(path: str | Path) -> Model:
    stream = io.BytesIO(Path(path).read_bytes())
    if _read(stream, 4, "magic") != MAGIC:
        raise FormatError(f"{path}: not a model file (bad magic)")
    (version,) = struct.unpack("<H", _read(stream, 2, "version"))
    if version != VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    (desc_len,) = struct.unpack("<I", _read(stream, 4, "descriptor length"))
    try:
        descriptor = _read(stream, desc_len, "descriptor").decode("utf-8")
        model = model_from_descriptor(descriptor)
    except (ValueError, KeyError) as exc:
        raise FormatError(f"{path}: bad architecture descriptor: {exc}") from exc
    (count,) = struct.unpack("<I", _read(stream, 4, "parameter count"))
    if count != len(model.params):
        raise FormatError(
            f"{path}: descriptor declares {len(model.params)} parameters, file has {count}"
        )
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _read(stream, 2, "name length"))
        name = _read(stream, name_len, "name").decode("utf-8")
        if name not in model.params:
            raise FormatError(f"{path}: unexpected parameter {name!r}")
        (rank,) = struct.unpack("<B", _read(stream, 1, "rank"))
        shape = struct.unpack(f"<{rank}I", _read(stream, 4 * rank, "extents"))
        target = model.params[name]
        if shape != target.shape:
            raise FormatError(f"{path}: parameter {name!r} has shape {shape}, expected {target.shape}")
        numel = int(np.prod(shape)) if rank else 1
        raw = _read(stream, 8 * numel, f"data for {name!r}")
        target[...] = np.frombuffer(raw, dtype="<f8").reshape(shape)
    if stream.read(1):
        raise FormatError(f"{path}: trailing bytes after parameters")
    return model
