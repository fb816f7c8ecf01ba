"""Shared on-disk formats: flat binary array container and canonical JSON.

The binary container is a little-endian float64 payload prefixed by a JSON
header: 8-byte magic, uint64 header length, UTF-8 header, raw array bytes.
The header's "arrays" entry lists (name, shape) in payload order.  Canonical
JSON uses fixed key order (insertion order of the dicts we build), 2-space
indent and repr floats, so identical content means identical bytes.
"""

import json
import struct
from pathlib import Path

import numpy as np

__all__ = ["canonical_json_dumps", "write_json", "read_json",
           "write_array_container", "read_array_container"]

_MAGIC = b"VTRJBIN\x00"


def canonical_json_dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(canonical_json_dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def write_array_container(path, header: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write named float64 arrays plus a JSON header to one flat binary file."""
    meta = dict(header)
    meta["arrays"] = [{"name": name, "shape": list(arr.shape)}
                      for name, arr in arrays.items()]
    header_bytes = canonical_json_dumps(meta).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_array_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Inverse of write_array_container."""
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path}: not a vartraj binary container")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    arrays = {}
    offset = 16 + hlen
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        arrays[entry["name"]] = arr.reshape(shape).astype(float)
        offset += count * 8
    meta = {k: v for k, v in header.items() if k != "arrays"}
    return meta, arrays
