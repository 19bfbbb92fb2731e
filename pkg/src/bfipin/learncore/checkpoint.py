"""Checkpoint container.

Layout::

    b"BFPCKPT1"                   8-byte magic
    uint32 little-endian          header length in bytes
    header                        UTF-8 JSON, keys sorted
    payload                       concatenated little-endian float64 arrays

The header holds ``arrays`` (name, shape, byte offset into the payload) and a
free-form ``state`` dict of training scalars. Writing the same arrays and
state always produces the same bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"BFPCKPT1"


def dumps(arrays: dict, state: dict | None = None) -> bytes:
    table, chunks, offset = [], [], 0
    for name in arrays:
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        table.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.nbytes
    header = json.dumps({"arrays": table, "state": state or {}}, sort_keys=True,
                        separators=(",", ":")).encode()
    return MAGIC + struct.pack("<I", len(header)) + header + b"".join(chunks)


def loads(blob: bytes) -> tuple[dict, dict]:
    if blob[:8] != MAGIC:
        raise ValueError("not a checkpoint (bad magic)")
    (n,) = struct.unpack("<I", blob[8:12])
    header = json.loads(blob[12:12 + n].decode())
    base = 12 + n
    arrays = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = base + entry["offset"]
        if start + 8 * count > len(blob):
            raise ValueError(f"checkpoint truncated in array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(blob, "<f8", count, start).reshape(entry["shape"]).copy()
    return arrays, header["state"]


def save(path, arrays: dict, state: dict | None = None):
    Path(path).write_bytes(dumps(arrays, state))


def load(path) -> tuple[dict, dict]:
    return loads(Path(path).read_bytes())
