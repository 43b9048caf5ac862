"""Seeded task generators (copy, adding, sequential images) and dataset readers."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LOSS_MODES = ("per-step-categorical", "final-categorical", "final-scalar")

COPY_CLASSES = 10
COPY_WINDOW = 10
COPY_DELIMITER = 9

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

CIFAR_RECORD = 1 + 32 * 32 * 3
NSCIFAR_LENGTH = 1000


@dataclass
class SequenceBatch:
    """Time-major batch: ``inputs`` is (T, B, d); targets depend on ``loss_mode``.

    per-step-categorical: int (T, B); final-categorical: int (B,);
    final-scalar: float (B,).
    """

    inputs: np.ndarray
    targets: np.ndarray
    loss_mode: str

    def __post_init__(self):
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"unknown loss mode {self.loss_mode!r}")
        if self.inputs.ndim != 3:
            raise ValueError(f"inputs must be (T, B, d), got {self.inputs.shape}")

    @property
    def T(self) -> int:
        return self.inputs.shape[0]

    @property
    def bsz(self) -> int:
        return self.inputs.shape[1]

    @property
    def d(self) -> int:
        return self.inputs.shape[2]

    def subset(self, idx) -> "SequenceBatch":
        idx = np.asarray(idx)
        targets = self.targets[:, idx] if self.loss_mode == "per-step-categorical" else self.targets[idx]
        return SequenceBatch(self.inputs[:, idx], targets, self.loss_mode)


def one_hot(ids: np.ndarray, k: int, dtype=np.float32) -> np.ndarray:
    out = np.zeros(ids.shape + (k,), dtype=dtype)
    np.put_along_axis(out, ids[..., None].astype(np.intp), 1, axis=-1)
    return out


def copy_symbols(rng: np.random.Generator, bsz: int, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer (L, B) input and target symbols of the copy task, L = T + 20."""
    if T < 0 or bsz < 1:
        raise ValueError(f"need T >= 0 and bsz >= 1, got T={T}, bsz={bsz}")
    length = T + 2 * COPY_WINDOW
    data = rng.integers(1, 9, size=(COPY_WINDOW, bsz))
    x = np.zeros((length, bsz), dtype=np.int64)
    x[:COPY_WINDOW] = data
    x[COPY_WINDOW + T] = COPY_DELIMITER
    y = np.zeros((length, bsz), dtype=np.int64)
    y[-COPY_WINDOW:] = data
    return x, y


def copy_batch(rng: np.random.Generator, bsz: int, T: int) -> SequenceBatch:
    """Copy task: recall 10 symbols from {1..8} after a delay of T blanks and a delimiter."""
    x, y = copy_symbols(rng, bsz, T)
    return SequenceBatch(one_hot(x, COPY_CLASSES), y, "per-step-categorical")


def adding_batch(rng: np.random.Generator, bsz: int, T: int) -> SequenceBatch:
    """Adding task: sum the two values flagged once in each half of a length-T sequence."""
    if T < 2:
        raise ValueError(f"adding task needs T >= 2, got {T}")
    values = rng.uniform(0.0, 1.0, size=(T, bsz))
    half = T // 2
    first = rng.integers(0, half, size=bsz)
    second = rng.integers(half, T, size=bsz)
    marks = np.zeros((T, bsz))
    cols = np.arange(bsz)
    marks[first, cols] = 1.0
    marks[second, cols] = 1.0
    target = values[first, cols] + values[second, cols]
    inputs = np.stack([values, marks], axis=-1).astype(np.float32)
    return SequenceBatch(inputs, target.astype(np.float32), "final-scalar")


# ---------------------------------------------------------------- datasets

class DataFormatError(ValueError):
    pass


@dataclass
class ImageDataset:
    """uint8 images (count, H, W) or (count, H, W, 3) with uint8 labels."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DataFormatError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx) -> "ImageDataset":
        return ImageDataset(self.images[idx], self.labels[idx])


# MNIST readers return the same container
IdxDataset = ImageDataset


def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    raw = path.read_bytes()
    return gzip.decompress(raw) if path.suffix == ".gz" else raw


def read_idx(path, expected_magic: int) -> np.ndarray:
    """Parse a big-endian IDX file of unsigned bytes."""
    data = _read_bytes(path)
    if len(data) < 4:
        raise DataFormatError(f"{path}: truncated header at offset {len(data)}")
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic != expected_magic:
        raise DataFormatError(f"{path}: unexpected magic 0x{magic:08x} at offset 0 (want 0x{expected_magic:08x})")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise DataFormatError(f"{path}: truncated dimension header at offset {len(data)}")
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    count = int(np.prod(dims))
    if len(data) - header < count:
        raise DataFormatError(f"{path}: truncated payload at offset {len(data)} (need {header + count} bytes)")
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=header).reshape(dims)


def load_idx(images_path, labels_path) -> ImageDataset:
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if len(images) != len(labels):
        raise DataFormatError(f"image count {len(images)} != label count {len(labels)}")
    return ImageDataset(images, labels)


def write_idx(path, array: np.ndarray) -> Path:
    """Write a uint8 array as IDX (used for fixtures and dataset subsets)."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(struct.pack(f">I{array.ndim}I", magic, *array.shape))
        fh.write(array.tobytes())
    return path


def load_cifar10_batches(paths) -> ImageDataset:
    """Read CIFAR-10 binary batches (label byte + 1024 R + 1024 G + 1024 B per record)."""
    images, labels = [], []
    for path in paths:
        data = _read_bytes(path)
        if len(data) % CIFAR_RECORD:
            raise DataFormatError(f"{path}: size {len(data)} is not a multiple of {CIFAR_RECORD}")
        rec = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        labels.append(rec[:, 0])
        images.append(rec[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1))
    return ImageDataset(np.concatenate(images), np.concatenate(labels))


def train_val_split(dataset: ImageDataset, val_size: int = 5000) -> tuple[ImageDataset, ImageDataset]:
    """Hold out the last ``val_size`` training images for validation."""
    if not 0 <= val_size < len(dataset):
        raise ValueError(f"val_size {val_size} incompatible with {len(dataset)} images")
    cut = len(dataset) - val_size
    return dataset.take(slice(0, cut)), dataset.take(slice(cut, None))


def make_permutation(seed: int, length: int = 784) -> np.ndarray:
    """Fixed pixel permutation for psMNIST, drawn from a dedicated seed."""
    return np.random.Generator(np.random.Philox(int(seed))).permutation(length)


def seq_image_batch(dataset: ImageDataset, indices, mode: str, permutation: np.ndarray | None = None,
                    rng: np.random.Generator | None = None, length: int = NSCIFAR_LENGTH) -> SequenceBatch:
    """Sequential image classification batch.

    smnist: one pixel per step (T=784, d=1); psmnist: the same after a fixed
    pixel permutation; nscifar: one 32x3 row per step (d=96) followed by
    U(0, 1) noise steps up to ``length``.
    """
    indices = np.asarray(indices)
    images = dataset.images[indices]
    labels = dataset.labels[indices].astype(np.int64)
    if mode in ("smnist", "psmnist"):
        pix = images.reshape(len(indices), -1).astype(np.float32) / 255.0
        if mode == "psmnist":
            if permutation is None:
                raise ValueError("psmnist needs a pixel permutation")
            pix = pix[:, permutation]
        return SequenceBatch(np.ascontiguousarray(pix.T[:, :, None]), labels, "final-categorical")
    if mode == "nscifar":
        if images.ndim != 4:
            raise ValueError(f"nscifar expects (count, 32, 32, 3) images, got {images.shape}")
        if rng is None:
            raise ValueError("nscifar needs an rng for the noise padding")
        rows = images.reshape(len(indices), images.shape[1], -1).astype(np.float32) / 255.0
        steps = rows.shape[1]
        if length < steps:
            raise ValueError(f"padded length {length} shorter than {steps} image rows")
        x = np.empty((length, len(indices), rows.shape[2]), dtype=np.float32)
        x[:steps] = rows.transpose(1, 0, 2)
        x[steps:] = rng.uniform(0.0, 1.0, size=x[steps:].shape)
        return SequenceBatch(x, labels, "final-categorical")
    raise ValueError(f"unknown sequential image mode {mode!r}")
