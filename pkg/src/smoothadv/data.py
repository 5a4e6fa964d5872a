"""Datasets: MNIST-style IDX files, synthetic blobs and seeded batching."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IDXFormatError(ValueError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ValueError("inputs must be a non-empty (N, d) array")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("need exactly one label per input row")
        if self.inputs.min() < 0.0 or self.inputs.max() > 1.0:
            raise ValueError("inputs must lie in [0, 1]")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], self.n_classes)


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray
    indices: np.ndarray


def _read_header(buf: bytes, path, magic_expected: int, ndim: int):
    if len(buf) < 4 + 4 * ndim:
        raise IDXFormatError(f"{path}: truncated header")
    magic = struct.unpack(">I", buf[:4])[0]
    if magic != magic_expected:
        raise IDXFormatError(f"{path}: bad magic 0x{magic:08x} (expected 0x{magic_expected:08x})")
    dims = struct.unpack(f">{ndim}I", buf[4:4 + 4 * ndim])
    return dims, 4 + 4 * ndim


def read_idx_images(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    (n, h, w), off = _read_header(buf, path, IMAGES_MAGIC, 3)
    if len(buf) - off < n * h * w:
        raise IDXFormatError(f"{path}: truncated pixel data")
    return np.frombuffer(buf, dtype=np.uint8, count=n * h * w, offset=off).reshape(n, h, w)


def read_idx_labels(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    (n,), off = _read_header(buf, path, LABELS_MAGIC, 1)
    if len(buf) - off < n:
        raise IDXFormatError(f"{path}: truncated label data")
    return np.frombuffer(buf, dtype=np.uint8, count=n, offset=off)


def write_idx_images(path, images) -> None:
    images = np.asarray(images)
    if images.ndim != 3:
        raise ValueError("images must be (N, H, W)")
    data = np.ascontiguousarray(images, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGES_MAGIC, *data.shape))
        f.write(data.tobytes())


def write_idx_labels(path, labels) -> None:
    data = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", LABELS_MAGIC, data.size))
        f.write(data.tobytes())


def load_idx(images_path, labels_path, n_classes: int | None = None) -> Dataset:
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IDXFormatError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels")
    if n_classes is None:
        n_classes = max(10, int(labels.max()) + 1) if labels.size else 10
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(x, labels.astype(np.int64), n_classes)


def save_idx(dataset: Dataset, images_path, labels_path, shape=None) -> None:
    """Write a dataset as IDX; inputs are quantized to bytes (``round(255 x)``)."""
    n, d = dataset.inputs.shape
    if shape is None:
        side = int(round(np.sqrt(d)))
        shape = (side, side) if side * side == d else (1, d)
    pixels = np.rint(dataset.inputs * 255.0).astype(np.uint8).reshape(n, *shape)
    write_idx_images(images_path, pixels)
    write_idx_labels(labels_path, dataset.labels)


def synth_gaussians(n_per_class: int, dim: int, separation: float, c: int = 2,
                    seed: int = 0, sigma: float = 0.1) -> Dataset:
    """Isotropic blobs whose means are ``separation`` apart, clipped into the unit cube.

    Means sit on a simplex-like layout around the cube centre: class ``k``
    is offset along its own axis (two classes share axis 0 with opposite
    signs), scaled so every pair of means is ``separation`` apart.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be at least 1")
    if not separation > 0:
        raise ValueError("separation must be positive")
    if c < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    means = np.full((c, dim), 0.5)
    if c == 2:
        means[0, 0] -= separation / 2
        means[1, 0] += separation / 2
    else:
        if dim < c:
            raise ValueError("synthetic layout with c > 2 classes needs dim >= c")
        for k in range(c):
            means[k, k] += separation / np.sqrt(2.0)
        means -= means.mean(axis=0) - 0.5
    labels = np.repeat(np.arange(c), n_per_class)
    x = means[labels] + sigma * rng.standard_normal((labels.size, dim))
    perm = rng.permutation(labels.size)
    return Dataset(np.clip(x[perm], 0.0, 1.0), labels[perm], c)


def train_test_split(dataset: Dataset, n_test: int, seed: int = 0):
    perm = np.random.default_rng(seed).permutation(len(dataset))
    return dataset.subset(perm[n_test:]), dataset.subset(perm[:n_test])


def batches(dataset: Dataset, batch_size: int, seed: int = 0, shuffle: bool = True) -> list[Batch]:
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    n = len(dataset)
    order = np.random.default_rng(seed).permutation(n) if shuffle else np.arange(n)
    return [Batch(dataset.inputs[idx], dataset.labels[idx], idx)
            for idx in (order[s:s + batch_size] for s in range(0, n, batch_size))]


MNIST_ENV = "SMOOTHADV_MNIST_DIR"
_MNIST_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")


def load_mnist_pool(directory=None) -> Dataset:
    """Real MNIST digits: IDX files if available, else mlxtend's bundled 5k subset."""
    directory = directory or os.environ.get(MNIST_ENV)
    if directory:
        d = Path(directory)
        img, lab = (d / f for f in _MNIST_FILES)
        if not img.exists() and (d / (_MNIST_FILES[0] + ".gz")).exists():
            raise FileNotFoundError(f"{d}: decompress the .gz IDX files first")
        return load_idx(img, lab, 10)
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:
        raise FileNotFoundError(
            f"no MNIST source: set {MNIST_ENV} to a directory with IDX files "
            "or install mlxtend") from exc
    x, y = mnist_data()
    return Dataset(x / 255.0, y.astype(np.int64), 10)


def mnist_preset(n_train: int = 2000, n_test: int = 1000, seed: int = 0, directory=None):
    """Fixed-seed desk-scale MNIST split (2,000 train / 1,000 test by default)."""
    pool = load_mnist_pool(directory)
    if n_train + n_test > len(pool):
        raise ValueError(f"pool has only {len(pool)} samples")
    perm = np.random.default_rng(seed).permutation(len(pool))
    return pool.subset(perm[:n_train]), pool.subset(perm[n_train:n_train + n_test])
