"""SFLD1 container: named float32 arrays in a self-describing binary file.

Layout, all integers little-endian u64::

    b"SFLD1"
    repeated until EOF:
        name_len, name (UTF-8), rank, extent * rank, float32 payload (row-major)
"""

from __future__ import annotations

import os
import struct
from typing import Mapping

import numpy as np

from nerfdiff.errors import ContractError

MAGIC = b"SFLD1"
_U64 = struct.Struct("<Q")


def save_arrays(path: str | os.PathLike, arrays: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for name, arr in arrays.items():
            a = np.array(arr, dtype="<f4", order="C")  # keeps rank 0, unlike ascontiguousarray
            raw = name.encode("utf-8")
            fh.write(_U64.pack(len(raw)))
            fh.write(raw)
            fh.write(_U64.pack(a.ndim))
            for extent in a.shape:
                fh.write(_U64.pack(extent))
            fh.write(a.tobytes(order="C"))


def load_arrays(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:len(MAGIC)] != MAGIC:
        raise ContractError(f"{path}: not an SFLD1 file")
    pos = len(MAGIC)
    out: dict[str, np.ndarray] = {}

    def u64() -> int:
        nonlocal pos
        if pos + 8 > len(blob):
            raise ContractError(f"{path}: truncated record")
        (val,) = _U64.unpack_from(blob, pos)
        pos += 8
        return val

    while pos < len(blob):
        n = u64()
        name = blob[pos:pos + n].decode("utf-8")
        pos += n
        rank = u64()
        shape = tuple(u64() for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64))
        end = pos + 4 * count
        if end > len(blob):
            raise ContractError(f"{path}: truncated payload for '{name}'")
        out[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(shape).astype(np.float32)
        pos = end
    return out
