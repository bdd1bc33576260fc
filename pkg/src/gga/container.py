"""Versioned binary container for models, detectors, datasets, and attack batches.

Layout: 4-byte magic, little-endian u32 format version, little-endian u64
header length, UTF-8 JSON header, then the raw array payloads in header
order. Arrays are stored as little-endian bytes so a file round-trips
bit-exactly on any platform. Files are written atomically (temp + rename).
"""

import hashlib
import json
import os
import struct
import tempfile

import numpy as np

from .errors import ContainerFormatError

MAGIC = b"GGAF"
FORMAT_VERSION = 1

# dtypes permitted in the payload; everything is stored little-endian
_DTYPES = {"<f8", "<i8", "|b1", "|u1"}


def _canonical_dtype(arr):
    kind = arr.dtype.kind
    if kind == "f":
        return arr.astype("<f8", copy=False), "<f8"
    if kind in ("i", "u") and arr.dtype.itemsize == 1 and kind == "u":
        return arr.astype("|u1", copy=False), "|u1"
    if kind in ("i", "u"):
        return arr.astype("<i8", copy=False), "<i8"
    if kind == "b":
        return arr.astype("|b1", copy=False), "|b1"
    raise ContainerFormatError(f"unsupported array dtype {arr.dtype!r}")


def to_bytes(kind, meta, arrays):
    """Serialize a container to bytes.

    `arrays` is a name -> ndarray mapping or an ordered list of
    (name, ndarray) pairs; payloads are laid out in iteration order.
    """
    specs = []
    payloads = []
    items = arrays.items() if hasattr(arrays, "items") else arrays
    for name, arr in items:
        arr = np.ascontiguousarray(arr)
        arr, dtype = _canonical_dtype(arr)
        specs.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        payloads.append(np.ascontiguousarray(arr).tobytes())
    header = json.dumps(
        {"kind": kind, "meta": meta, "arrays": specs},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    out = [MAGIC, struct.pack("<IQ", FORMAT_VERSION, len(header)), header]
    out.extend(payloads)
    return b"".join(out)


def from_bytes(blob, expect_kind=None):
    """Parse container bytes, returning (kind, meta, arrays)."""
    if len(blob) < 16:
        raise ContainerFormatError("file truncated before header", offset=len(blob))
    if blob[:4] != MAGIC:
        raise ContainerFormatError(f"bad magic {blob[:4]!r}", offset=0)
    version, header_len = struct.unpack("<IQ", blob[4:16])
    if version != FORMAT_VERSION:
        raise ContainerFormatError(f"unsupported container version {version}", offset=4)
    if len(blob) < 16 + header_len:
        raise ContainerFormatError("file truncated inside header", offset=len(blob))
    try:
        header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerFormatError(f"corrupt header: {exc}", offset=16) from exc
    kind = header.get("kind")
    if expect_kind is not None and kind != expect_kind:
        raise ContainerFormatError(f"expected a {expect_kind!r} container, found {kind!r}")
    arrays = {}
    offset = 16 + header_len
    for spec in header["arrays"]:
        dtype = spec["dtype"]
        if dtype not in _DTYPES:
            raise ContainerFormatError(f"unsupported dtype {dtype!r} in header")
        shape = tuple(int(s) for s in spec["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * np.dtype(dtype).itemsize
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise ContainerFormatError(
                f"array {spec['name']!r} truncated", offset=offset
            )
        arrays[spec["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(shape).copy()
        offset += nbytes
    return kind, header["meta"], arrays


def write(path, kind, meta, arrays):
    """Atomically write a container file."""
    blob = to_bytes(kind, meta, arrays)
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".gga-tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read(path, expect_kind=None):
    with open(path, "rb") as fh:
        blob = fh.read()
    return from_bytes(blob, expect_kind=expect_kind)


def sha256_hex(blob):
    return hashlib.sha256(blob).hexdigest()


def content_hash(kind, meta, arrays):
    """Short stable hash of a container's serialized content."""
    return sha256_hex(to_bytes(kind, meta, arrays))[:16]
