"""Dataset ingestion, synthetic generation, preprocessing and batching.

Datasets store features and targets column-per-sample so they feed the
network directly.  Classification targets are one-hot columns.  All
shuffling is driven by the deterministic generator from numcore, so
splits and minibatch orders are pure functions of (data, seed, epoch).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .numcore import SeededRng

TASKS = ("regression", "classification")


class ParseError(ValueError):
    """Raised on malformed input files, with row/column location."""


@dataclass
class Dataset:
    features: np.ndarray  # d_x x N
    targets: np.ndarray  # d_y x N
    task: str = "regression"
    class_count: int | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.features.shape[1] != self.targets.shape[1]:
            raise ValueError("feature/target column counts differ")
        if self.task == "classification" and self.class_count is None:
            raise ValueError("classification datasets need class_count")

    @property
    def n(self) -> int:
        return self.features.shape[1]

    def columns(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.features[:, idx], self.targets[:, idx]

    def fingerprint(self) -> str:
        """64-bit content hash recorded in run logs."""
        h = hashlib.blake2b(digest_size=8)
        h.update(self.task.encode())
        h.update(struct.pack("<qq", *self.features.shape))
        h.update(np.ascontiguousarray(self.features, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.targets, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass
class Standardizer:
    """Per-feature mean/stddev from the training split only.

    Constant features keep stddev 1 and are flagged rather than divided
    away.
    """

    mean: np.ndarray
    std: np.ndarray
    constant_features: list[int] = field(default_factory=list)

    @classmethod
    def fit(cls, values: np.ndarray) -> "Standardizer":
        mean = values.mean(axis=1, keepdims=True)
        std = values.std(axis=1, keepdims=True)
        constant = [int(i) for i in np.nonzero(std.ravel() == 0.0)[0]]
        std = np.where(std == 0.0, 1.0, std)
        return cls(mean=mean, std=std, constant_features=constant)

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std


def load_csv(
    path: str,
    feature_columns: list[int],
    target_columns: list[int],
    header: bool = True,
    task: str = "regression",
    class_count: int | None = None,
    delimiter: str = ",",
) -> Dataset:
    """Read a delimiter-separated numeric file into a Dataset.

    Row order is preserved.  For classification the (single) target
    column holds integer class indices, converted to one-hot.
    """
    rows: list[list[float]] = []
    width: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            if header and lineno == 0:
                continue
            fields = line.split(delimiter)
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise ParseError(
                    f"{path}: row {lineno}: expected {width} fields, got {len(fields)}"
                )
            parsed = []
            for col, text in enumerate(fields):
                try:
                    parsed.append(float(text))
                except ValueError:
                    raise ParseError(
                        f"{path}: row {lineno}, column {col}: not numeric: {text!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=np.float64)
    max_col = max(max(feature_columns), max(target_columns))
    if max_col >= table.shape[1]:
        raise ParseError(f"{path}: schema references column {max_col}, file has {table.shape[1]}")
    features = table[:, feature_columns].T.copy()
    raw_targets = table[:, target_columns].T.copy()
    if task == "classification":
        labels = raw_targets.ravel().astype(np.int64)
        count = class_count if class_count is not None else int(labels.max()) + 1
        targets = one_hot(labels, count)
        return Dataset(features, targets, task="classification", class_count=count)
    return Dataset(features, raw_targets, task="regression")


def one_hot(labels: np.ndarray, class_count: int) -> np.ndarray:
    if labels.min() < 0 or labels.max() >= class_count:
        raise ValueError("label out of range for class_count")
    out = np.zeros((class_count, labels.size))
    out[labels, np.arange(labels.size)] = 1.0
    return out


def load_idx_images(path: str) -> np.ndarray:
    """IDX image file (magic 0x00000803) to a (rows*cols) x N matrix in [0, 1]."""
    with open(path, "rb") as fh:
        magic, n, rows, cols = struct.unpack(">IIII", fh.read(16))
        if magic != 0x00000803:
            raise ParseError(f"{path}: bad IDX image magic 0x{magic:08x}")
        raw = np.frombuffer(fh.read(n * rows * cols), dtype=np.uint8)
    return (raw.reshape(n, rows * cols).T / 255.0).astype(np.float64)


def load_idx_labels(path: str) -> np.ndarray:
    """IDX label file (magic 0x00000801) to an int64 vector."""
    with open(path, "rb") as fh:
        magic, n = struct.unpack(">II", fh.read(8))
        if magic != 0x00000801:
            raise ParseError(f"{path}: bad IDX label magic 0x{magic:08x}")
        raw = np.frombuffer(fh.read(n), dtype=np.uint8)
    return raw.astype(np.int64)


def load_idx(images_path: str, labels_path: str, class_count: int = 10) -> Dataset:
    features = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if features.shape[1] != labels.size:
        raise ParseError("image/label counts differ")
    return Dataset(
        features, one_hot(labels, class_count), task="classification", class_count=class_count
    )


def split(ds: Dataset, train_fraction: float, rng: SeededRng) -> tuple[Dataset, Dataset]:
    """Seeded permutation then prefix split; disjoint and exhaustive."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    perm = rng.permutation(ds.n)
    n_train = int(round(train_fraction * ds.n))
    train_idx, test_idx = perm[:n_train], perm[n_train:]
    return (
        Dataset(*ds.columns(train_idx), task=ds.task, class_count=ds.class_count),
        Dataset(*ds.columns(test_idx), task=ds.task, class_count=ds.class_count),
    )


def synthetic_regression(rng: SeededRng, n: int, d_x: int, noise_std: float) -> Dataset:
    """Sine-of-a-random-linear-map regression task.

    x ~ N(0, I); y = sin(a.x + b) + noise, with a ~ N(0, 1/d_x) per
    coordinate (keeps the argument O(1) at any d_x) and b ~ N(0, 1).
    """
    if n < 1 or d_x < 1:
        raise ValueError("n and d_x must be at least 1")
    x = rng.normal(d_x, n)
    a = rng.normal(1, d_x, stddev=1.0 / np.sqrt(d_x))
    b = rng.normal(1, 1)
    y = np.sin(a @ x + b)
    if noise_std > 0:
        y = y + rng.normal(1, n, stddev=noise_std)
    return Dataset(x, y, task="regression")


def minibatches(ds: Dataset, batch_size: int, rng: SeededRng, epoch: int) -> list[np.ndarray]:
    """Column-index slices for one epoch: a fresh shuffle per epoch (a pure
    function of the rng seed and the epoch), final partial batch kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    perm = rng.derive(epoch).permutation(ds.n)
    return [perm[i : i + batch_size] for i in range(0, ds.n, batch_size)]
