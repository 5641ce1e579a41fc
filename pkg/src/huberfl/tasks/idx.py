"""Reader and writer for the big-endian IDX files MNIST ships in."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import HuberFLError
from .classifier import ClassifierDataset

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxParseError(HuberFLError, ValueError):
    """Base class for malformed IDX input."""


class IdxMagicError(IdxParseError):
    pass


class IdxTruncatedError(IdxParseError):
    pass


class IdxCountMismatchError(IdxParseError):
    pass


def _read_header(raw: bytes, path, magic: int, ndims: int):
    header_len = 4 + 4 * ndims
    if len(raw) < 4:
        raise IdxTruncatedError(f"{path}: file too short for an IDX header ({len(raw)} bytes)")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise IdxMagicError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(raw) < header_len:
        raise IdxTruncatedError(f"{path}: header truncated")
    dims = struct.unpack(f">{ndims}I", raw[4:header_len])
    expected = int(np.prod(dims, dtype=np.int64))
    body = raw[header_len:]
    if len(body) < expected:
        raise IdxTruncatedError(f"{path}: expected {expected} data bytes, found {len(body)}")
    return dims, np.frombuffer(body[:expected], dtype=np.uint8)


def read_idx_images(path) -> np.ndarray:
    """Images as an ``(N, rows*cols)`` float array scaled to [0, 1]."""
    raw = Path(path).read_bytes()
    (n, rows, cols), data = _read_header(raw, path, IMAGES_MAGIC, 3)
    return data.reshape(n, rows * cols).astype(np.float64) / 255.0


def read_idx_labels(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    (n,), data = _read_header(raw, path, LABELS_MAGIC, 1)
    return data.astype(np.int64)


def mnist_load(images_path, labels_path, num_classes: int = 10) -> ClassifierDataset:
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(
            f"{images_path} holds {images.shape[0]} images but {labels_path} holds {labels.shape[0]} labels"
        )
    return ClassifierDataset(images, labels, num_classes)


def write_idx_images(path, images: np.ndarray) -> None:
    """Write uint8 images of shape (N, rows, cols)."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())
