"""Portable single-file checkpoint format for model parameters.

Layout: 4-byte magic ``CFKD``, uint32 little-endian header length, UTF-8 JSON
header, then the raw C-order float64 bytes of every array in header order.
The header records the model kind, an architecture descriptor, and the name,
shape, and byte offset of each array, so files can be read back without torch.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import InputError

MAGIC = b"CFKD"
FORMAT_VERSION = 1


def save_checkpoint(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    entries = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        # tobytes() always serializes in C order, so no contiguity cast that
        # would promote 0-d arrays to 1-d
        a = np.asarray(arr, dtype=np.float64)
        raw = a.tobytes()
        entries.append(
            {"name": name, "shape": list(a.shape), "dtype": "float64", "offset": offset}
        )
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "meta": meta,
        "arrays": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path) -> tuple[str, dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise InputError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise InputError(
                f"{path}: unsupported checkpoint version {header.get('format_version')}"
            )
        body = fh.read()
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(body, dtype=np.float64, count=count, offset=start)
        arrays[entry["name"]] = arr.reshape(shape).copy()
    return header["kind"], header["meta"], arrays
