"""Raw-waveform datasets: ``WSDS0001`` files and a synthetic generator."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DATASET_MAGIC = b"WSDS0001"
_HEADER = struct.Struct("<8sIII")

BASE_FREQ = 1.0 / 128.0     # cycles per sample for class 0
HARMONIC = 3
HARMONIC_GAIN = 0.3
NOISE_STD = 0.1


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    clips: np.ndarray       # (count, T) float32
    labels: np.ndarray      # (count,) int64
    num_classes: int

    def __post_init__(self):
        self.clips = np.asarray(self.clips, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.clips.ndim != 2:
            raise DatasetError(f"clips must be (count, T), got shape {self.clips.shape}")
        if self.labels.shape != (self.clips.shape[0],):
            raise DatasetError("one label per clip required")
        if self.num_classes < 1:
            raise DatasetError("num_classes must be >= 1")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DatasetError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.clips.shape[0]

    @property
    def length(self) -> int:
        return self.clips.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.clips[idx], self.labels[idx], self.num_classes)


def dataset_bytes(ds: Dataset) -> bytes:
    count, T = ds.clips.shape
    body = np.empty((count, T + 1), dtype="<u4")
    body[:, 0] = ds.labels.astype("<u4")
    body[:, 1:] = ds.clips.astype("<f4").view("<u4")
    return _HEADER.pack(DATASET_MAGIC, count, T, ds.num_classes) + body.tobytes()


def parse_dataset(buf: bytes) -> Dataset:
    if len(buf) < _HEADER.size:
        raise DatasetError("truncated dataset header")
    magic, count, T, classes = _HEADER.unpack_from(buf)
    if magic != DATASET_MAGIC:
        raise DatasetError(f"bad dataset magic {magic!r}")
    expected = _HEADER.size + count * (4 + 4 * T)
    if len(buf) != expected:
        raise DatasetError(f"dataset file has {len(buf)} bytes, header implies {expected}")
    body = np.frombuffer(buf, dtype="<u4", offset=_HEADER.size).reshape(count, T + 1)
    labels = body[:, 0].astype(np.int64)
    if count and labels.max() >= classes:
        raise DatasetError(f"label {labels.max()} >= class count {classes}")
    clips = body[:, 1:].copy().view("<f4").astype(np.float32)
    return Dataset(clips, labels, classes)


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_bytes(dataset_bytes(ds))


def load_dataset(path) -> Dataset:
    return parse_dataset(Path(path).read_bytes())


def class_frequency(k: int) -> float:
    return BASE_FREQ * 2.0 ** k


def synth_dataset(num_classes: int, per_class: int, T: int, seed: int = 0) -> Dataset:
    """Octave-spaced tones with a third harmonic and white noise.

    Class ``k`` has fundamental ``BASE_FREQ * 2**k`` cycles/sample and random
    phases.  Each clip is scaled so its peak magnitude is 1.  Clips are
    ordered class by class.
    """
    if num_classes < 2:
        raise DatasetError("num_classes must be >= 2")
    if T < 64:
        raise DatasetError("T must be >= 64")
    if HARMONIC * class_frequency(num_classes - 1) >= 0.5:
        raise DatasetError(f"{num_classes} octave-spaced classes exceed the Nyquist limit")
    rng = np.random.default_rng(seed)
    t = np.arange(T)
    clips = np.empty((num_classes * per_class, T))
    labels = np.repeat(np.arange(num_classes), per_class)
    for i, k in enumerate(labels):
        f = class_frequency(k)
        phase = rng.uniform(0, 2 * np.pi, size=2)
        x = (np.sin(2 * np.pi * f * t + phase[0])
             + HARMONIC_GAIN * np.sin(2 * np.pi * HARMONIC * f * t + phase[1])
             + rng.normal(0.0, NOISE_STD, T))
        clips[i] = x / np.abs(x).max()
    return Dataset(clips.astype(np.float32), labels, num_classes)


def split_holdout(ds: Dataset, fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified split; returns ``(train, held_out)``."""
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for k in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == k)
        idx = idx[rng.permutation(len(idx))]
        n_test = int(round(fraction * len(idx)))
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    return ds.subset(np.sort(np.concatenate(train_idx))), ds.subset(np.sort(np.concatenate(test_idx)))
