"""Versioned binary container for named float64 arrays plus a JSON manifest.

Layout (all integers little-endian):

    magic 'MTPC' | u32 version | u64 manifest length | manifest (UTF-8 JSON)
    u32 entry count | entries sorted by name

    entry: u16 name length | name (UTF-8) | u8 ndim | u64 per dim | f64 payload

The manifest JSON is dumped with sorted keys and fixed separators, so a
given (manifest, entries) pair always serializes to identical bytes.
"""

import json
import struct
from pathlib import Path

import numpy as np

from morphtag.errors import MorphtagError

MAGIC = b"MTPC"
VERSION = 1


class ContainerError(MorphtagError):
    pass


def dumps(manifest, entries):
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    mjson = json.dumps(manifest, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    blob += struct.pack("<Q", len(mjson))
    blob += mjson
    blob += struct.pack("<I", len(entries))
    for name in sorted(entries):
        arr = np.ascontiguousarray(entries[name], dtype="<f8")
        nb = name.encode("utf-8")
        blob += struct.pack("<H", len(nb))
        blob += nb
        blob += struct.pack("<B", arr.ndim)
        for d in arr.shape:
            blob += struct.pack("<Q", d)
        blob += arr.tobytes()
    return bytes(blob)


def loads(data):
    if data[:4] != MAGIC:
        raise ContainerError("not a parameter container (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    off = 8
    (mlen,) = struct.unpack_from("<Q", data, off)
    off += 8
    manifest = json.loads(data[off:off + mlen].decode("utf-8"))
    off += mlen
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    entries = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + nlen].decode("utf-8")
        off += nlen
        ndim = data[off]
        off += 1
        shape = struct.unpack_from(f"<{ndim}Q", data, off) if ndim else ()
        off += 8 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        off += 8 * n
        entries[name] = arr
    return manifest, entries


def save(path, manifest, entries):
    Path(path).write_bytes(dumps(manifest, entries))


def load(path):
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise ContainerError(f"cannot read {path}: {e}") from e
    return loads(data)
