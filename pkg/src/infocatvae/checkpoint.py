"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"ICVAE1\\0\\0"                 magic, 8 bytes
    u32 version                    currently 1
    u32 entry count
    per entry:
        u32 name length, name bytes (UTF-8)
        u32 rank, u32 * rank dims
        u8 width (4 = float32, 8 = float64)
        payload, little-endian floats in row-major order
    u32 CRC32 of every preceding byte
"""

from __future__ import annotations

import os
import struct
import zlib
from collections import OrderedDict

import numpy as np

MAGIC = b"ICVAE1\x00\x00"
VERSION = 1
_WIDTHS = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


class CheckpointError(ValueError):
    pass


class ChecksumError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


def encode(entries) -> bytes:
    """Serialise an ordered mapping ``name -> float array``."""
    parts = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, arr in entries.items():
        arr = np.asarray(arr)
        if arr.dtype == np.float32:
            width = 4
        elif arr.dtype == np.float64:
            width = 8
        else:
            raise TypeError(f"entry {name!r}: unsupported dtype {arr.dtype}")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(bytes([width]))
        parts.append(np.ascontiguousarray(arr, dtype=_WIDTHS[width]).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode(raw: bytes) -> "OrderedDict[str, np.ndarray]":
    if len(raw) < len(MAGIC) + 12:
        raise TruncatedCheckpointError(f"checkpoint too short ({len(raw)} bytes)")
    if raw[:8] != MAGIC:
        raise CheckpointError(f"bad magic {raw[:8]!r}")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    version, count = struct.unpack_from("<II", raw, 8)
    if version != VERSION:
        raise VersionError(f"unsupported checkpoint version {version}")
    if zlib.crc32(body) != crc:
        # a short file also fails the CRC; tell the two apart where possible
        _walk(body, count, strict=False)
        raise ChecksumError("CRC32 mismatch; checkpoint is corrupt")
    return _walk(body, count, strict=True)


def _walk(body, count, strict):
    out = OrderedDict()
    pos = 16

    def need(n):
        if pos + n > len(body):
            raise TruncatedCheckpointError(f"checkpoint truncated at byte {pos}")

    for _ in range(count):
        need(4)
        (nlen,) = struct.unpack_from("<I", body, pos)
        pos += 4
        need(nlen)
        name = body[pos:pos + nlen].decode("utf-8", errors="replace")
        pos += nlen
        need(4)
        (rank,) = struct.unpack_from("<I", body, pos)
        pos += 4
        need(4 * rank + 1)
        dims = struct.unpack_from(f"<{rank}I", body, pos)
        pos += 4 * rank
        width = body[pos]
        pos += 1
        if width not in _WIDTHS:
            if strict:
                raise CheckpointError(f"entry {name!r}: bad width byte {width}")
            return out
        n = int(np.prod(dims, dtype=np.int64)) * width
        need(n)
        out[name] = np.frombuffer(body, dtype=_WIDTHS[width], count=n // width, offset=pos).reshape(dims).astype(
            _WIDTHS[width].newbyteorder("="), copy=True
        )
        pos += n
    if strict and pos != len(body):
        raise CheckpointError(f"{len(body) - pos} unexpected bytes after the last entry")
    return out


def save(path, entries) -> None:
    raw = encode(entries)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(raw)
    os.replace(tmp, path)


def load(path) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as fh:
        return decode(fh.read())


# integers (counters, RNG words) are stored as float64, exact below 2**53


def pack_u64(value: int) -> np.ndarray:
    value = int(value) & ((1 << 64) - 1)
    return np.array([value >> 32, value & 0xFFFFFFFF], dtype=np.float64)


def unpack_u64(arr) -> int:
    hi, lo = (int(v) for v in np.asarray(arr).reshape(-1))
    return (hi << 32) | lo
