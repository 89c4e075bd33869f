"""Named-tensor checkpoint files.

Layout (all integers little-endian)::

    b"NXCKPT1\\n"                 8-byte magic
    uint64                        length of the JSON header in bytes
    header                        UTF-8 JSON, sorted keys, no whitespace:
                                  {"meta": {...}, "tensors": [{"name", "shape", "offset"}, ...]}
    payload                       float64 little-endian data, row-major, tensors in header order

Tensors are written in sorted name order, so equal parameter sets produce
byte-identical files.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .tensor import Tensor

MAGIC = b"NXCKPT1\n"


def to_bytes(tensors: Mapping[str, Tensor | np.ndarray], meta: dict | None = None) -> bytes:
    entries, chunks, offset = [], [], 0
    for name in sorted(tensors):
        t = tensors[name]
        arr = np.ascontiguousarray(t.data if isinstance(t, Tensor) else t, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"meta": meta or {}, "tensors": entries},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(header)) + header + b"".join(chunks)


def from_bytes(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if blob[:8] != MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16:16 + hlen].decode("utf-8"))
    base = 16 + hlen
    out = {}
    for e in header["tensors"]:
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        start = base + e["offset"]
        out[e["name"]] = np.frombuffer(blob, dtype="<f8", count=n, offset=start).reshape(e["shape"]).copy()
    return out, header["meta"]


def save(path: str | Path, tensors: Mapping[str, Tensor | np.ndarray], meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(tensors, meta))
    return path


def load(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    return from_bytes(Path(path).read_bytes())
