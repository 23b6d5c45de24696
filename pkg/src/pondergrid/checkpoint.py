"""Flat binary container for named arrays.

Layout (little-endian throughout):

    bytes 0..7    magic  b"PGRIDCK1"
    bytes 8..15   uint64 header length H
    bytes 16..16+H  UTF-8 JSON header
    rest          raw array data, concatenated in header order

Header schema::

    {
      "version": 1,
      "meta": { ... arbitrary JSON (config snapshot, step, ...) ... },
      "arrays": [
        {"name": str, "dtype": "<f4"|"<f8"|"<i8", "shape": [..], "offset": int}
      ]
    }

Offsets are relative to the start of the data section. The same container
carries parameter checkpoints, optimizer moments, EMA snapshots, and
attention dumps (shape headers included), so one reader covers them all.
Files are stable: saving the same arrays twice yields identical bytes.
"""

import json
import struct

import numpy as np

MAGIC = b"PGRIDCK1"

_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8"),
           "<i8": np.dtype("<i8"), "<i4": np.dtype("<i4"),
           "|b1": np.dtype("|b1")}


class CheckpointError(IOError):
    """Malformed or unreadable container file."""


def _dtype_tag(dt):
    tag = np.dtype(dt).newbyteorder("<").str
    if tag == "|b1":
        return tag
    if tag not in _DTYPES:
        raise CheckpointError(f"unsupported dtype {dt}")
    return tag


def save(path, arrays, meta=None):
    """Write name -> ndarray mapping (insertion order preserved)."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        tag = _dtype_tag(arr.dtype)
        raw = arr.tobytes()
        entries.append({"name": name, "dtype": tag,
                        "shape": list(arr.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"version": 1, "meta": meta or {}, "arrays": entries},
                        sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def load(path):
    """Read a container; returns (dict name -> ndarray, meta dict)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        try:
            header = json.loads(fh.read(hlen).decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
        if header.get("version") != 1:
            raise CheckpointError(f"{path}: unsupported version {header.get('version')}")
        data = fh.read()
    arrays = {}
    for ent in header["arrays"]:
        dt = _DTYPES.get(ent["dtype"])
        if dt is None:
            raise CheckpointError(f"{path}: unknown dtype {ent['dtype']}")
        shape = tuple(ent["shape"])
        nbytes = dt.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dt.itemsize
        raw = data[ent["offset"]:ent["offset"] + nbytes]
        if len(raw) != nbytes:
            raise CheckpointError(f"{path}: truncated data for {ent['name']}")
        arrays[ent["name"]] = np.frombuffer(raw, dtype=dt).reshape(shape).copy()
    return arrays, header.get("meta", {})
