"""Self-describing binary container for scenes, weights and tracks.

Layout (all integers little-endian):

    magic "MVTK" | u32 version | u32 header length | header bytes
    | u32 array count | arrays...

The header is UTF-8 ``key=value`` lines. Each array record is a u16 name
length, the name, a dtype code (0 = float64, 1 = uint8), a u8 rank, the
shape as u64 values, and the row-major payload. Writing the same content
twice produces byte-identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import InvalidConfig

MAGIC = b"MVTK"
VERSION = 1

_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<u1")}
_CODES = {np.dtype(np.float64): 0, np.dtype(np.uint8): 1}


def write_container(path, header: dict, arrays: dict) -> None:
    """Write header fields and named arrays to ``path``.

    Arrays must be float64 or uint8; anything else is the caller's bug.
    Insertion order of both dicts is preserved in the file.
    """
    head = "".join(f"{k}={v}\n" for k, v in header.items()).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(head)))
        f.write(head)
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            if arr.dtype not in _CODES:
                raise InvalidConfig(f"array {name!r} has unsupported dtype {arr.dtype}")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def read_container(path) -> tuple[dict, dict]:
    """Read a container back as (header dict, name -> array dict)."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise InvalidConfig(f"{path}: not an MVTK container")
        version, head_len = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise InvalidConfig(f"{path}: unsupported container version {version}")
        header = {}
        for line in f.read(head_len).decode("utf-8").splitlines():
            key, _, value = line.partition("=")
            header[key] = value
        (count,) = struct.unpack("<I", f.read(4))
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            code, ndim = struct.unpack("<BB", f.read(2))
            shape = struct.unpack(f"<{ndim}Q", f.read(8 * ndim))
            dtype = _DTYPES[code]
            data = f.read(dtype.itemsize * int(np.prod(shape, dtype=np.int64)))
            arrays[name] = np.frombuffer(data, dtype=dtype).reshape(shape).copy()
        return header, arrays


def container_to_json(path) -> str:
    """Debug export: the full container as a JSON document."""
    header, arrays = read_container(path)
    doc = {
        "header": header,
        "arrays": {
            name: {"dtype": str(a.dtype), "shape": list(a.shape), "data": a.ravel().tolist()}
            for name, a in arrays.items()
        },
    }
    return json.dumps(doc, indent=2, sort_keys=False)
