"""MNIST IDX parsing, the 50k/10k/10k split and mini-batch iteration.

IDX files are big-endian: a 4-byte magic (0x00000803 for images, 0x00000801
for labels), one u32 per dimension, then raw unsigned bytes. Gzipped files
are detected by their ``1f 8b`` prefix and decompressed transparently.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .model import Batch
from .rng import Rng

__all__ = [
    "IdxFormatError",
    "Dataset",
    "Splits",
    "parse_idx_images",
    "parse_idx_labels",
    "serialize_idx_images",
    "serialize_idx_labels",
    "read_idx_bytes",
    "load_dataset",
    "load_mnist",
    "split",
    "minibatches",
    "N_TRAIN",
    "N_VALID",
]

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
ROWS = COLS = 28
N_CLASSES = 10
N_TRAIN = 50_000
N_VALID = 10_000


class IdxFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")

    def __len__(self) -> int:
        return self.labels.shape[0]

    def head(self, n: int) -> Dataset:
        return Dataset(self.images[:n], self.labels[:n])

    def as_batch(self) -> Batch:
        return Batch(self.images, self.labels)


@dataclass
class Splits:
    train: Dataset
    valid: Dataset
    test: Dataset


def _header(raw: bytes, magic: int, ndim: int) -> tuple[int, ...]:
    need = 4 + 4 * ndim
    if len(raw) < need:
        raise IdxFormatError(f"truncated header: need {need} bytes, have {len(raw)}", len(raw))
    (found,) = struct.unpack_from(">I", raw, 0)
    if found != magic:
        raise IdxFormatError(f"bad magic 0x{found:08x}, expected 0x{magic:08x}", 0)
    return struct.unpack_from(f">{ndim}I", raw, 4)


def parse_idx_images(raw: bytes) -> np.ndarray:
    """Return an ``(n, 784)`` float64 matrix of pixel / 255."""
    n, rows, cols = _header(raw, IMAGES_MAGIC, 3)
    if (rows, cols) != (ROWS, COLS):
        raise IdxFormatError(f"images are {rows}x{cols}, expected {ROWS}x{COLS}", 8)
    start, size = 16, n * rows * cols
    if len(raw) - start != size:
        raise IdxFormatError(f"payload holds {len(raw) - start} bytes, header promises {size}", min(len(raw), start + size))
    pixels = np.frombuffer(raw, dtype=np.uint8, count=size, offset=start)
    return pixels.reshape(n, rows * cols).astype(np.float64) / 255.0


def parse_idx_labels(raw: bytes) -> np.ndarray:
    (n,) = _header(raw, LABELS_MAGIC, 1)
    start = 8
    if len(raw) - start != n:
        raise IdxFormatError(f"payload holds {len(raw) - start} labels, header promises {n}", min(len(raw), start + n))
    labels = np.frombuffer(raw, dtype=np.uint8, count=n, offset=start)
    bad = np.flatnonzero(labels >= N_CLASSES)
    if bad.size:
        raise IdxFormatError(f"label {labels[bad[0]]} out of range 0..{N_CLASSES - 1}", start + int(bad[0]))
    return labels.astype(np.int64)


def serialize_idx_images(images: np.ndarray) -> bytes:
    """Inverse of :func:`parse_idx_images` for images built from bytes."""
    pixels = np.rint(np.asarray(images) * 255.0)
    if pixels.min(initial=0) < 0 or pixels.max(initial=0) > 255:
        raise ValueError("pixel values must lie in [0, 1]")
    return struct.pack(">IIII", IMAGES_MAGIC, images.shape[0], ROWS, COLS) + pixels.astype(np.uint8).tobytes()


def serialize_idx_labels(labels) -> bytes:
    labels = np.asarray(labels)
    return struct.pack(">II", LABELS_MAGIC, labels.shape[0]) + labels.astype(np.uint8).tobytes()


def read_idx_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def load_dataset(images_path, labels_path) -> Dataset:
    return Dataset(parse_idx_images(read_idx_bytes(images_path)), parse_idx_labels(read_idx_bytes(labels_path)))


def split(train_file_data: Dataset) -> tuple[Dataset, Dataset]:
    """First 50,000 records train, last 10,000 validate (file order)."""
    n = len(train_file_data)
    if n != N_TRAIN + N_VALID:
        raise IdxFormatError(f"training file has {n} records, expected {N_TRAIN + N_VALID}", 4)
    d = train_file_data
    return Dataset(d.images[:N_TRAIN], d.labels[:N_TRAIN]), Dataset(d.images[N_TRAIN:], d.labels[N_TRAIN:])


def load_mnist(train_images, train_labels, test_images, test_labels, train_limit: Optional[int] = None) -> Splits:
    """Load the four MNIST files and split; ``train_limit`` keeps a prefix of the training part."""
    train, valid = split(load_dataset(train_images, train_labels))
    if train_limit is not None:
        train = train.head(train_limit)
    return Splits(train, valid, load_dataset(test_images, test_labels))


def minibatches(dataset: Dataset, batch_size: int, rng: Rng) -> Iterator[Batch]:
    """One epoch of shuffled batches; the final batch may be short."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = rng.shuffle_indices(len(dataset))
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        yield Batch(dataset.images[idx], dataset.labels[idx])
