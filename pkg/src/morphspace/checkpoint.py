"""Self-describing binary container for model snapshots.

Layout (all integers little-endian):
    magic "MSCK" | u32 format_version | u64 manifest_len | manifest JSON
    u64 n_blocks | blocks sorted by name | u32 CRC32 of all preceding bytes

Each block: u16 name_len | name utf8 | u8 dtype code | u8 ndim | u32 dims...
| u64 payload_len | raw little-endian payload.

The manifest JSON is canonical (sorted keys, fixed separators), block order
is lexicographic, so save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

MAGIC = b"MSCK"
FORMAT_VERSION = 1

_DTYPES = {0: "<f4", 1: "<f8", 2: "<i8", 3: "u1"}
_DTYPE_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


class ContainerError(ValueError):
    pass


def _canonical_manifest(manifest: dict) -> bytes:
    return json.dumps(manifest, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()


def pack_container(manifest: dict, blocks: dict) -> bytes:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    mbytes = _canonical_manifest(manifest)
    out += struct.pack("<Q", len(mbytes))
    out += mbytes
    out += struct.pack("<Q", len(blocks))
    for name in sorted(blocks):
        arr = np.asarray(blocks[name])
        if arr.dtype == np.float32:
            arr = arr.astype("<f4", copy=False)
        elif arr.dtype == np.float64:
            arr = arr.astype("<f8", copy=False)
        elif arr.dtype in (np.int64, np.int32, np.dtype(int)):
            arr = arr.astype("<i8", copy=False)
        elif arr.dtype == np.uint8:
            arr = arr.astype("u1", copy=False)
        else:
            raise ContainerError(f"unsupported dtype {arr.dtype} for block {name!r}")
        code = _DTYPE_CODES[arr.dtype]
        nb = name.encode()
        if len(nb) > 0xFFFF:
            raise ContainerError(f"block name too long: {name[:40]}...")
        out += struct.pack("<H", len(nb))
        out += nb
        out += struct.pack("<BB", code, arr.ndim)
        for d in arr.shape:
            out += struct.pack("<I", d)
        payload = np.ascontiguousarray(arr).tobytes()
        out += struct.pack("<Q", len(payload))
        out += payload
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


def unpack_container(raw: bytes):
    """Returns (manifest, blocks). Raises ContainerError on any corruption."""
    if len(raw) < 20 or raw[:4] != MAGIC:
        raise ContainerError("not a checkpoint container (bad magic)")
    body, crc_stored = raw[:-4], struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(body) != crc_stored:
        raise ContainerError("checkpoint failed CRC32 integrity check")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported container format_version {version}")
    off = 8
    (mlen,) = struct.unpack_from("<Q", raw, off)
    off += 8
    try:
        manifest = json.loads(raw[off : off + mlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"manifest unreadable: {exc}") from exc
    off += mlen
    (n_blocks,) = struct.unpack_from("<Q", raw, off)
    off += 8
    blocks = {}
    for _ in range(n_blocks):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + nlen].decode()
        off += nlen
        code, ndim = struct.unpack_from("<BB", raw, off)
        off += 2
        if code not in _DTYPES:
            raise ContainerError(f"block {name!r} has unknown dtype code {code}")
        shape = struct.unpack_from(f"<{ndim}I", raw, off) if ndim else ()
        off += 4 * ndim
        (plen,) = struct.unpack_from("<Q", raw, off)
        off += 8
        arr = np.frombuffer(raw, dtype=_DTYPES[code], count=int(np.prod(shape, dtype=np.int64)) if shape else (plen // np.dtype(_DTYPES[code]).itemsize), offset=off)
        if arr.nbytes != plen:
            raise ContainerError(f"block {name!r} payload size mismatch")
        blocks[name] = arr.reshape(shape).copy()
        off += plen
    if off != len(body):
        raise ContainerError("trailing bytes after last block")
    return manifest, blocks


def save_container(path, manifest: dict, blocks: dict) -> None:
    data = pack_container(manifest, blocks)
    with open(path, "wb") as fh:
        fh.write(data)


def load_container(path):
    with open(path, "rb") as fh:
        return unpack_container(fh.read())
