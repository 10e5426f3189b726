"""NNC1 checkpoints: ``b"NNC1"``, u32 entry count, then per entry
u32 name length, UTF-8 name, u32 ndim, ndim x u32 dims, f32 LE payload.
"""

from __future__ import annotations

from typing import Dict, Mapping

import numpy as np

from .. import binio
from ..errors import FormatError

MAGIC = b"NNC1"


def checkpoint_bytes(params: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, binio.u32(len(params))]
    for name, value in params.items():
        arr = np.asarray(value)
        encoded = name.encode("utf-8")
        parts += [binio.u32(len(encoded)), encoded, binio.u32(arr.ndim)]
        parts += [binio.u32(d) for d in arr.shape]
        parts.append(binio.f32_rows(arr))
    return b"".join(parts)


def save_checkpoint(params: Mapping[str, np.ndarray], path) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(params))


def parse_checkpoint(reader: binio.Reader) -> Dict[str, np.ndarray]:
    reader.magic(MAGIC)
    out: Dict[str, np.ndarray] = {}
    for _ in range(reader.u32("entry count")):
        name_len = reader.u32("name length")
        try:
            name = reader.take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{reader.path}: entry name is not UTF-8") from exc
        ndim = reader.u32("ndim")
        shape = tuple(reader.u32("dim") for _ in range(ndim))
        count = int(np.prod(shape, dtype=np.int64))
        out[name] = reader.array("<f4", count, f"payload of {name}").reshape(shape).astype(np.float32)
    reader.finish()
    return out


def load_checkpoint(path) -> Dict[str, np.ndarray]:
    return parse_checkpoint(binio.read_file(path))
