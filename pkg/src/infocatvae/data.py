"""IDX (MNIST-style) file reading and deterministic mini-batching."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .rng import Rng

_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


class IdxFormatError(ValueError):
    """Malformed IDX content; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int, path=None):
        self.offset = offset
        self.path = path
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{message} (at byte offset {offset})")


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx(raw: bytes, path=None) -> np.ndarray:
    if len(raw) < 4:
        raise IdxFormatError("file shorter than the 4-byte magic number", len(raw), path)
    if raw[0] != 0 or raw[1] != 0:
        raise IdxFormatError(f"bad magic bytes {raw[:2].hex()}; expected 0000", 0, path)
    type_code, rank = raw[2], raw[3]
    if type_code not in _IDX_TYPES:
        raise IdxFormatError(f"unknown data type code 0x{type_code:02x}", 2, path)
    header_end = 4 + 4 * rank
    if len(raw) < header_end:
        raise IdxFormatError(f"header truncated: need {rank} dimension words", len(raw), path)
    dims = struct.unpack(f">{rank}I", raw[4:header_end])
    dtype = _IDX_TYPES[type_code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    available = len(raw) - header_end
    if available < expected:
        raise IdxFormatError(
            f"payload truncated: dims {dims} need {expected} bytes, found {available}",
            len(raw),
            path,
        )
    if available > expected:
        raise IdxFormatError(f"{available - expected} trailing bytes after payload", header_end + expected, path)
    arr = np.frombuffer(raw, dtype=dtype, count=expected // dtype.itemsize, offset=header_end)
    return arr.reshape(dims).astype(dtype.newbyteorder("="))


def load_idx(path) -> np.ndarray:
    """Read an IDX file (optionally gzip-compressed) into an array of its dims."""
    return parse_idx(_read_bytes(path), path=os.fspath(path))


def encode_idx(arr) -> bytes:
    arr = np.asarray(arr)
    codes = {v.newbyteorder("="): k for k, v in _IDX_TYPES.items()}
    key = arr.dtype.newbyteorder("=")
    if key not in codes:
        raise TypeError(f"dtype {arr.dtype} has no IDX type code")
    header = bytes([0, 0, codes[key], arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape)
    return header + arr.astype(_IDX_TYPES[codes[key]]).tobytes()


def save_idx(path, arr, compress=None) -> None:
    path = os.fspath(path)
    payload = encode_idx(arr)
    if compress is None:
        compress = path.endswith(".gz")
    if compress:
        payload = gzip.compress(payload, mtime=0)
    with open(path, "wb") as fh:
        fh.write(payload)


@dataclass(frozen=True)
class IdxDataset:
    images: np.ndarray  # (N, 784) in [0, 1]
    labels: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.images.shape[0]

    def subset(self, start: int, stop: int | None = None) -> "IdxDataset":
        labels = None if self.labels is None else self.labels[start:stop]
        return IdxDataset(self.images[start:stop], labels)


@dataclass(frozen=True)
class Batch:
    x: np.ndarray
    indices: np.ndarray


def load_dataset(images_path, labels_path=None, limit: int | None = None, offset: int = 0) -> IdxDataset:
    raw = load_idx(images_path)
    if raw.dtype != np.uint8:
        raise IdxFormatError(f"image file has dtype {raw.dtype}, expected unsigned bytes", 2, images_path)
    images = raw.reshape(raw.shape[0], -1).astype(np.float64) / 255.0
    labels = None
    if labels_path is not None:
        labels = load_idx(labels_path).astype(np.int64)
        if labels.shape != (raw.shape[0],):
            raise ValueError(f"label count {labels.shape} does not match {raw.shape[0]} images")
    stop = None if limit is None else offset + limit
    return IdxDataset(images, labels).subset(offset, stop)


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def find_idx_file(data_dir, stem: str):
    for suffix in ("", ".gz"):
        path = os.path.join(data_dir, stem + suffix)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"no {stem}[.gz] in {data_dir}")


def load_mnist_dir(data_dir, split="train", limit=None, offset=0) -> IdxDataset:
    img, lab = MNIST_FILES[split]
    labels_path = None
    try:
        labels_path = find_idx_file(data_dir, lab)
    except FileNotFoundError:
        pass
    return load_dataset(find_idx_file(data_dir, img), labels_path, limit=limit, offset=offset)


def batch_iterator(ds, batch_size: int, rng: Rng | None = None, shuffle: bool = True) -> Iterator[Batch]:
    """Yield batches covering every row exactly once.

    ``ds`` may be an :class:`IdxDataset` or a 2-D array. The shuffle order is
    drawn from ``rng`` when the iterator is created.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    images = ds.images if isinstance(ds, IdxDataset) else np.asarray(ds)
    n = images.shape[0]
    if shuffle:
        if rng is None:
            raise ValueError("shuffling needs an Rng")
        order = rng.permutation(n)
    else:
        order = np.arange(n)

    def gen():
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            yield Batch(images[idx], idx)

    return gen()
