"""Datasets: Gaussian synthetic data, label-skewed partitioning, IDX ingestion."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, SamplingError, UsageError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise UsageError("features must be (N, d) with one label per row")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise UsageError(f"labels must lie in [0, {self.class_count})")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def label_set(self) -> set[int]:
        return set(np.unique(self.labels).tolist())


@dataclass(frozen=True)
class PartitionSpec:
    P: int
    L_num: int
    D_min: int
    D_max: int
    seed: int

    def validate(self, num_classes: int):
        if self.P < 1:
            raise UsageError("P must be >= 1")
        if not 1 <= self.L_num:
            raise UsageError("L_num must be >= 1")
        if self.L_num > num_classes:
            raise UsageError(f"L_num={self.L_num} exceeds class count {num_classes}")
        if not 1 <= self.D_min <= self.D_max:
            raise UsageError("need 1 <= D_min <= D_max")
        if self.D_min < self.L_num:
            raise UsageError("D_min must be >= L_num so every drawn label gets a sample")


def largest_remainder(total: int, weights) -> np.ndarray:
    """Integer apportionment of ``total`` proportional to ``weights``.

    Floors first, then hands out the leftover units to the largest
    fractional parts (ties to the lower index).
    """
    w = np.asarray(weights, dtype=np.float64)
    quotas = total * w / w.sum()
    counts = np.floor(quotas).astype(np.int64)
    short = total - int(counts.sum())
    if short:
        order = np.argsort(-(quotas - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def partition_non_iid(source: LabeledDataset, spec: PartitionSpec) -> list[LabeledDataset]:
    """Split ``source`` into ``spec.P`` label-skewed shards.

    Each client draws ``L_num`` distinct labels, a total size uniform on
    ``[D_min, D_max]`` and uniform(0, 1) label weights; samples are drawn
    with replacement from each label's pool. Client ``i`` uses its own
    generator seeded from ``(seed, i)`` so shards are reproducible in
    isolation.
    """
    C = source.class_count
    spec.validate(C)
    pools = {c: np.flatnonzero(source.labels == c) for c in range(C)}
    shards = []
    for i in range(spec.P):
        rng = np.random.default_rng([spec.seed, i])
        classes = np.sort(rng.choice(C, size=spec.L_num, replace=False))
        d_num = int(rng.integers(spec.D_min, spec.D_max, endpoint=True))
        weights = rng.uniform(0.0, 1.0, size=spec.L_num)
        if weights.sum() == 0.0:
            weights[:] = 1.0
        counts = largest_remainder(d_num, weights)
        # keep every drawn label represented
        while (counts == 0).any():
            counts[np.argmax(counts)] -= 1
            counts[np.flatnonzero(counts == 0)[0]] += 1
        idx = []
        for c, n in zip(classes, counts):
            pool = pools[int(c)]
            if pool.size == 0:
                raise SamplingError(f"class {int(c)} has no samples in the source dataset")
            idx.append(rng.choice(pool, size=int(n), replace=True))
        idx = np.concatenate(idx)
        shards.append(LabeledDataset(source.features[idx], source.labels[idx], C))
    return shards


def class_means(classes: int, dim: int, separation: float) -> np.ndarray:
    """Circle layout for ``dim == 2``, scaled coordinate axes otherwise."""
    means = np.zeros((classes, dim))
    if dim == 2:
        angles = 2.0 * np.pi * np.arange(classes) / classes
        means[:, 0] = separation * np.cos(angles)
        means[:, 1] = separation * np.sin(angles)
    else:
        if classes > dim:
            raise UsageError(f"axis layout needs classes <= dim (got {classes} > {dim})")
        means[np.arange(classes), np.arange(classes)] = separation
    return means


def synth_gaussian(classes: int, dim: int, per_class: int, separation: float,
                   seed: int) -> LabeledDataset:
    """Draw ``per_class`` points from N(mu_c, I) for each class c."""
    if separation < 0:
        raise UsageError("separation must be non-negative")
    if classes < 2 or per_class < 1:
        raise UsageError("need >= 2 classes and >= 1 sample per class")
    rng = np.random.default_rng(seed)
    means = class_means(classes, dim, separation)
    labels = np.repeat(np.arange(classes), per_class)
    features = means[labels] + rng.standard_normal((labels.size, dim))
    return LabeledDataset(features, labels, classes)


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _header(raw: bytes, magic: int, ndims: int, what: str):
    need = 4 + 4 * ndims
    if len(raw) < 4:
        raise FormatError(f"{what}: file too short for magic number", len(raw))
    (found,) = struct.unpack_from(">I", raw, 0)
    if found != magic:
        raise FormatError(f"{what}: bad magic 0x{found:08x}, expected 0x{magic:08x}", 0)
    if len(raw) < need:
        raise FormatError(f"{what}: truncated header", len(raw))
    return struct.unpack_from(f">{ndims}I", raw, 4), need


def load_idx(images_path, labels_path) -> LabeledDataset:
    """Read an IDX image/label pair (optionally gzipped) into a dataset.

    Pixels are scaled to [0, 1] and images flattened row-major. Any
    structural problem raises FormatError carrying the byte offset.
    """
    img = _read_bytes(images_path)
    lab = _read_bytes(labels_path)
    (n_img, rows, cols), off_i = _header(img, IDX_IMAGES_MAGIC, 3, "images")
    (n_lab,), off_l = _header(lab, IDX_LABELS_MAGIC, 1, "labels")
    if n_img != n_lab:
        raise FormatError(f"image count {n_img} != label count {n_lab}", 4)
    if n_img == 0:
        raise FormatError("no samples", off_i)
    body = n_img * rows * cols
    if len(img) < off_i + body:
        raise FormatError("images: truncated pixel data", len(img))
    if len(lab) < off_l + n_lab:
        raise FormatError("labels: truncated label data", len(lab))
    pixels = np.frombuffer(img, dtype=np.uint8, count=body, offset=off_i)
    labels = np.frombuffer(lab, dtype=np.uint8, count=n_lab, offset=off_l).astype(np.int64)
    features = pixels.reshape(n_img, rows * cols).astype(np.float64) / 255.0
    return LabeledDataset(features, labels, max(int(labels.max()) + 1, 2))
