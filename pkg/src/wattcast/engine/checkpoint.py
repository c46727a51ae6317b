"""Binary parameter checkpoints: magic header, version byte, named records."""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .tensor import Param

MAGIC = b"WCHK"
VERSION = 1


def save_checkpoint(path: str | Path, params: Sequence[Param]) -> None:
    """Write ordered (identifier, shape, float64 row-major data) records."""
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate parameter names in checkpoint: {names}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        fh.write(struct.pack("<Q", len(params)))
        for p in params:
            encoded = p.name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", p.data.ndim))
            fh.write(struct.pack(f"<{p.data.ndim}Q", *p.data.shape))
            fh.write(np.ascontiguousarray(p.data).astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    """Read records back as an ordered name -> array mapping."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        version = fh.read(1)
        if version != bytes([VERSION]):
            raise ValueError(f"{path}: unsupported checkpoint version {version!r}")
        (count,) = struct.unpack("<Q", fh.read(8))
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
            n_values = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(8 * n_values), dtype="<f8")
            if data.size != n_values:
                raise ValueError(f"{path}: truncated record for {name!r}")
            out[name] = data.reshape(shape).astype(np.float64)
    return out


def restore(params: Sequence[Param], arrays: Mapping[str, np.ndarray]) -> None:
    """Assign checkpoint arrays onto parameters by identifier."""
    for p in params:
        if p.name not in arrays:
            raise KeyError(f"checkpoint is missing parameter {p.name!r}")
        value = arrays[p.name]
        if value.shape != p.data.shape:
            raise ValueError(
                f"checkpoint shape {value.shape} != parameter {p.name!r} "
                f"shape {p.data.shape}"
            )
        p.data = value.copy()
