"""Dataset ingestion: big-endian IDX image/label files plus seeded synthetic
generators (Gaussian mixtures and a digit-like 28x28 image task)."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    features: np.ndarray  # float32; [n, d] or [n, c, h, w]
    labels: np.ndarray    # int64
    split: str
    num_classes: int

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise ValueError("count mismatch between features and labels")
        if self.labels.size and int(self.labels.max()) >= self.num_classes:
            raise ValueError("label out of range")

    def __len__(self) -> int:
        return len(self.labels)


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise ValueError("unexpected end of file")
    return buf


def load_idx(path_images, path_labels, split: str = "train", num_classes: int = 10) -> Dataset:
    """Parse an IDX image/label pair into [n, 1, rows, cols] float32 pixels
    scaled to [0, 1]."""
    with open(path_images, "rb") as f:
        magic, n, rows, cols = struct.unpack(">IIII", _read_exact(f, 16))
        if magic != IDX_IMAGES_MAGIC:
            raise ValueError(f"bad magic in image file: 0x{magic:08x}")
        raw = _read_exact(f, n * rows * cols)
        images = np.frombuffer(raw, dtype=np.uint8).reshape(n, 1, rows, cols)
    with open(path_labels, "rb") as f:
        magic, n_labels = struct.unpack(">II", _read_exact(f, 8))
        if magic != IDX_LABELS_MAGIC:
            raise ValueError(f"bad magic in label file: 0x{magic:08x}")
        labels = np.frombuffer(_read_exact(f, n_labels), dtype=np.uint8)
    if n_labels != n:
        raise ValueError(f"count mismatch: {n} images vs {n_labels} labels")
    return Dataset(images.astype(np.float32) / np.float32(255.0),
                   labels.astype(np.int64), split, num_classes)


def write_idx(images_u8: np.ndarray, labels: np.ndarray, path_images, path_labels) -> None:
    """Write a [n, rows, cols] uint8 image stack and its labels as IDX files."""
    n, rows, cols = images_u8.shape
    with open(path_images, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(images_u8.astype(np.uint8).tobytes())
    with open(path_labels, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        f.write(np.asarray(labels).astype(np.uint8).tobytes())


def synth_gaussians(num_classes: int, dim: int, n: int, seed: int,
                    separation: float = 4.0, split: str = "train") -> Dataset:
    """Class-conditional unit-variance Gaussians on orthogonal class
    directions, each mean at distance `separation` from the origin (pairwise
    mean distance is separation * sqrt(2))."""
    if n < num_classes:
        raise ValueError("need at least one sample per class")
    if dim < num_classes:
        raise ValueError("dim must be >= num_classes for orthonormal class means")
    mean_rng = np.random.default_rng(num_classes * 100003 + dim)
    basis, _ = np.linalg.qr(mean_rng.standard_normal((dim, num_classes)))
    means = separation * basis.T  # [classes, dim]
    rng = np.random.default_rng([seed, 0 if split == "train" else 1])
    labels = np.arange(n, dtype=np.int64) % num_classes
    x = means[labels] + rng.standard_normal((n, dim))
    return Dataset(x.astype(np.float32), labels, split, num_classes)


def synth_digits(n: int, seed: int, noise: float = 0.35, shift: int = 2,
                 split: str = "train", task_seed: int = 7) -> Dataset:
    """Digit-like 28x28 ten-class images: one blocky prototype per class,
    randomly shifted and corrupted with pixel noise, quantized to uint8."""
    protos = np.stack([_digit_prototype(task_seed, c) for c in range(10)])
    rng = np.random.default_rng([seed, 0 if split == "train" else 1])
    labels = rng.integers(0, 10, size=n, endpoint=False).astype(np.int64)
    images = protos[labels]
    if shift:
        dy = rng.integers(-shift, shift, size=n, endpoint=True)
        dx = rng.integers(-shift, shift, size=n, endpoint=True)
        images = np.stack([np.roll(img, (r, c), axis=(0, 1))
                           for img, r, c in zip(images, dy, dx)])
    images = images + noise * rng.standard_normal(images.shape)
    u8 = np.clip(images * 255.0, 0, 255).astype(np.uint8)
    return Dataset((u8.astype(np.float32) / np.float32(255.0)).reshape(n, 1, 28, 28),
                   labels, split, num_classes=10)


def _digit_prototype(task_seed: int, cls: int) -> np.ndarray:
    rng = np.random.default_rng([task_seed, cls])
    coarse = (rng.random((7, 7)) > 0.55).astype(np.float64)
    img = np.kron(coarse, np.ones((4, 4)))
    # soften block edges so shifted copies overlap smoothly
    img = (img + np.roll(img, 1, 0) + np.roll(img, 1, 1) + np.roll(img, -1, 0) + np.roll(img, -1, 1)) / 5.0
    return img


def synth_digits_idx(n: int, seed: int, out_dir, noise: float = 0.35, shift: int = 2,
                     split: str = "train", task_seed: int = 7) -> tuple[Path, Path]:
    """Materialize a synth_digits draw as an IDX file pair; returns the paths."""
    ds = synth_digits(n, seed, noise=noise, shift=shift, split=split, task_seed=task_seed)
    u8 = np.round(ds.features.reshape(n, 28, 28) * 255.0).astype(np.uint8)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    img_path = out_dir / f"digits-{split}-images.idx"
    lbl_path = out_dir / f"digits-{split}-labels.idx"
    write_idx(u8, ds.labels, img_path, lbl_path)
    return img_path, lbl_path
