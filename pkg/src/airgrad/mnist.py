"""IDX-format digit dataset ingestion.

Reads the classic big-endian IDX image/label files (magic 2051 for images,
2049 for labels), plain or gzip-compressed, and scales pixels to [0, 1].
Nothing is downloaded implicitly; :func:`fetch_mnist` grabs the four files
from a mirror URL the caller supplies explicitly.
"""

from __future__ import annotations

import gzip
import os
import struct
import urllib.request
from dataclasses import dataclass

import numpy as np

__all__ = ["Dataset", "MnistFormatError", "fetch_mnist", "load_idx_images", "load_idx_labels", "load_mnist"]

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049

_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


class MnistFormatError(ValueError):
    """Raised for bad magic numbers, truncated files, or count mismatches."""


@dataclass(frozen=True)
class Dataset:
    train_images: np.ndarray
    train_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray


def _read_bytes(path: str) -> bytes:
    if path.endswith(".gz"):
        with gzip.open(path, "rb") as fh:
            return fh.read()
    with open(path, "rb") as fh:
        return fh.read()


def load_idx_images(path: str) -> np.ndarray:
    """Images as a (count, rows*cols) float array scaled to [0, 1]."""
    raw = _read_bytes(path)
    if len(raw) < 16:
        raise MnistFormatError(f"{path}: truncated header")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGE_MAGIC:
        raise MnistFormatError(f"{path}: bad image magic {magic} (expected {IMAGE_MAGIC})")
    expected = 16 + count * rows * cols
    if len(raw) < expected:
        raise MnistFormatError(f"{path}: truncated data ({len(raw)} < {expected} bytes)")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=count * rows * cols, offset=16)
    return pixels.reshape(count, rows * cols).astype(np.float64) / 255.0


def load_idx_labels(path: str) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < 8:
        raise MnistFormatError(f"{path}: truncated header")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != LABEL_MAGIC:
        raise MnistFormatError(f"{path}: bad label magic {magic} (expected {LABEL_MAGIC})")
    if len(raw) < 8 + count:
        raise MnistFormatError(f"{path}: truncated data ({len(raw)} < {8 + count} bytes)")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=8).astype(np.int64)


def _resolve(directory: str, stem: str) -> str:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx"), stem.replace("-idx", ".idx") + ".gz"):
        path = os.path.join(directory, name)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"missing {stem}[.gz] under {directory}")


def load_mnist(directory: str) -> Dataset:
    """Load the four IDX files from a directory, validating counts."""
    train_images = load_idx_images(_resolve(directory, _FILES["train_images"]))
    train_labels = load_idx_labels(_resolve(directory, _FILES["train_labels"]))
    test_images = load_idx_images(_resolve(directory, _FILES["test_images"]))
    test_labels = load_idx_labels(_resolve(directory, _FILES["test_labels"]))
    if train_images.shape[0] != train_labels.shape[0]:
        raise MnistFormatError(
            f"train image count {train_images.shape[0]} != label count {train_labels.shape[0]}"
        )
    if test_images.shape[0] != test_labels.shape[0]:
        raise MnistFormatError(
            f"test image count {test_images.shape[0]} != label count {test_labels.shape[0]}"
        )
    return Dataset(train_images, train_labels, test_images, test_labels)


def fetch_mnist(directory: str, base_url: str) -> None:
    """Download the four gzipped IDX files from an explicit mirror URL."""
    os.makedirs(directory, exist_ok=True)
    for stem in _FILES.values():
        name = stem + ".gz"
        target = os.path.join(directory, name)
        if os.path.exists(target):
            continue
        url = base_url.rstrip("/") + "/" + name
        with urllib.request.urlopen(url) as resp, open(target, "wb") as out:
            out.write(resp.read())
