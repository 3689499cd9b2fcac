"""Datasets, neighbor oracles, feature files, and synthetic data.

Features arrive precomputed (CSV or the packed "MIF1" binary format).
Neighborhood structure comes from one of three oracle modes: shared single
label, any-overlap label sets, or a thresholded Euclidean distance where
the threshold is a percentile of sampled pairwise distances.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FileFormatError, InvalidInput

FEATURES_MAGIC = b"MIF1"

SINGLE_LABEL = "single_label"
MULTI_LABEL = "multi_label"
METRIC_THRESHOLD = "metric_threshold"
ORACLE_MODES = (SINGLE_LABEL, MULTI_LABEL, METRIC_THRESHOLD)

# cap on sampled pairs when estimating the metric-mode threshold
DEFAULT_PAIR_BUDGET = 1_000_000


@dataclass
class Dataset:
    """Feature matrix with optional labels and named index splits.

    The test split must be disjoint from the retrieval split; training
    indices normally come from within the retrieval split.
    """

    features: np.ndarray  # (N, n) float64
    labels: np.ndarray | None = None  # (N,) int or (N, L) bool, or None
    splits: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise InvalidInput(f"features must be N x n, got {self.features.shape}")
        n_items = self.features.shape[0]
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape[0] != n_items:
                raise InvalidInput("labels and features disagree on N")
        for name, idx in self.splits.items():
            idx = np.asarray(idx, dtype=np.intp)
            if idx.size and (idx.min() < 0 or idx.max() >= n_items):
                raise InvalidInput(f"split '{name}' has out-of-range indices")
            self.splits[name] = idx
        test = self.splits.get("test")
        retrieval = self.splits.get("retrieval")
        if test is not None and retrieval is not None:
            if np.intersect1d(test, retrieval).size:
                raise InvalidInput("test and retrieval splits must be disjoint")

    @property
    def count(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


class AffinityOracle:
    """Symmetric pairwise neighbor relation over dataset indices.

    Irreflexive by convention: is_neighbor(i, i) is False so self pairs
    stay out of every population.
    """

    def __init__(self, mode: str, *, labels: np.ndarray | None = None,
                 features: np.ndarray | None = None,
                 threshold_distance: float | None = None,
                 percentile: float | None = None) -> None:
        if mode not in ORACLE_MODES:
            raise InvalidInput(f"unknown oracle mode '{mode}'")
        self.mode = mode
        self.labels = labels
        self.features = features
        self.threshold_distance = threshold_distance
        self.percentile = percentile
        if mode in (SINGLE_LABEL, MULTI_LABEL) and labels is None:
            raise InvalidInput(f"{mode} oracle needs labels")
        if mode == MULTI_LABEL and labels is not None and labels.ndim != 2:
            raise InvalidInput("multi_label oracle needs an N x L label-set matrix")
        if mode == METRIC_THRESHOLD and (features is None or threshold_distance is None):
            raise InvalidInput("metric oracle needs features and a threshold")

    def row(self, i: int, candidates: np.ndarray) -> np.ndarray:
        """Neighbor flags of item i against an index array (self -> False)."""
        candidates = np.asarray(candidates, dtype=np.intp)
        if self.mode == SINGLE_LABEL:
            flags = self.labels[candidates] == self.labels[i]
        elif self.mode == MULTI_LABEL:
            flags = (self.labels[candidates] & self.labels[i][None, :]).any(axis=1)
        else:
            diff = self.features[candidates] - self.features[i][None, :]
            flags = np.sqrt((diff * diff).sum(axis=1)) < self.threshold_distance
        flags = np.asarray(flags, dtype=bool)
        flags[candidates == i] = False
        return flags

    def is_neighbor(self, i: int, j: int) -> bool:
        return bool(self.row(i, np.asarray([j]))[0])

    def pairwise(self, indices: np.ndarray) -> np.ndarray:
        """Dense symmetric neighbor matrix for a batch of indices."""
        indices = np.asarray(indices, dtype=np.intp)
        if self.mode == SINGLE_LABEL:
            lab = self.labels[indices]
            flags = lab[:, None] == lab[None, :]
        elif self.mode == MULTI_LABEL:
            lab = self.labels[indices].astype(np.int64)
            flags = (lab @ lab.T) > 0
        else:
            x = self.features[indices]
            sq = (x * x).sum(axis=1)
            d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
            np.clip(d2, 0.0, None, out=d2)
            flags = np.sqrt(d2) < self.threshold_distance
            flags = flags | flags.T  # kill rounding asymmetry from the Gram trick
        np.fill_diagonal(flags, False)
        return flags


def build_oracle(dataset: Dataset, mode: str, percentile: float | None = None,
                 *, seed: int = 0, pair_budget: int = DEFAULT_PAIR_BUDGET,
                 split: str = "train") -> AffinityOracle:
    """Construct the neighbor oracle for a dataset.

    Metric mode draws up to pair_budget distinct pairs from the given split
    (all pairs when fewer) and thresholds at the requested percentile of
    their Euclidean distances.
    """
    if mode in (SINGLE_LABEL, MULTI_LABEL):
        if dataset.labels is None:
            raise InvalidInput(f"{mode} oracle requires dataset labels")
        return AffinityOracle(mode, labels=dataset.labels)
    if percentile is None or not 0.0 < percentile < 100.0:
        raise InvalidInput(f"metric mode needs a percentile in (0, 100), got {percentile}")
    idx = dataset.splits.get(split)
    if idx is None or idx.size < 2:
        idx = np.arange(dataset.count)
    n = idx.size
    total_pairs = n * (n - 1) // 2
    rng = np.random.default_rng(seed)
    if total_pairs <= pair_budget:
        ii, jj = np.triu_indices(n, k=1)
    else:
        # seeded uniform pair sample; collisions are harmless for a percentile
        ii = rng.integers(0, n, size=pair_budget)
        jj = rng.integers(0, n - 1, size=pair_budget)
        jj = np.where(jj >= ii, jj + 1, jj)
    a = dataset.features[idx[ii]]
    diff = a - dataset.features[idx[jj]]
    dists = np.sqrt((diff * diff).sum(axis=1))
    threshold = float(np.percentile(dists, percentile))
    return AffinityOracle(METRIC_THRESHOLD, features=dataset.features,
                          threshold_distance=threshold, percentile=percentile)


def load_features_csv(path) -> np.ndarray:
    rows: list[list[float]] = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise FileFormatError(
                    f"{path}: row {lineno} has {len(parts)} values, expected {width}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise FileFormatError(f"{path}: row {lineno}: {exc}") from exc
    if not rows:
        raise FileFormatError(f"{path}: no feature rows")
    return np.asarray(rows, dtype=np.float64)


def save_features_csv(path, features: np.ndarray) -> None:
    np.savetxt(path, np.asarray(features, dtype=np.float64),
               fmt="%.17g", delimiter=",")


def load_features_packed(path) -> np.ndarray:
    """Read the "MIF1" feature file: magic, N, n, then row-major float32."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FEATURES_MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}, expected MIF1")
        n_items, dim = struct.unpack("<II", fh.read(8))
        raw = fh.read(n_items * dim * 4)
        if len(raw) != n_items * dim * 4:
            raise FileFormatError(f"{path}: truncated feature payload")
        data = np.frombuffer(raw, dtype="<f4").reshape(n_items, dim)
    return data.astype(np.float64)


def save_features_packed(path, features: np.ndarray) -> None:
    features = np.asarray(features)
    with open(path, "wb") as fh:
        fh.write(FEATURES_MAGIC)
        fh.write(struct.pack("<II", features.shape[0], features.shape[1]))
        fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())


def load_features(path, fmt: str | None = None) -> np.ndarray:
    """Load a feature matrix; format inferred from the suffix unless given."""
    if fmt is None:
        fmt = "csv" if str(path).endswith(".csv") else "packed"
    if fmt == "csv":
        return load_features_csv(path)
    if fmt in ("packed", "packed-binary", "mif1"):
        return load_features_packed(path)
    raise InvalidInput(f"unknown feature format '{fmt}'")


def load_labels_csv(path) -> np.ndarray:
    """Label file: one row per item, either a single int or ;-separated ints.

    Rows with a single value load as (N,) ints; multi-valued rows load as an
    (N, L) membership matrix over the union of mentioned concepts.
    """
    raw: list[list[int]] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw.append([int(tok) for tok in line.replace(";", " ").split()])
            except ValueError as exc:
                raise FileFormatError(f"{path}: row {lineno}: {exc}") from exc
    if not raw:
        raise FileFormatError(f"{path}: no label rows")
    if all(len(r) == 1 for r in raw):
        return np.asarray([r[0] for r in raw], dtype=np.int64)
    width = max(c for row in raw for c in row) + 1
    mat = np.zeros((len(raw), width), dtype=bool)
    for i, row in enumerate(raw):
        for c in row:
            if c < 0:
                raise FileFormatError(f"{path}: negative concept id {c}")
            mat[i, c] = True
    return mat


def save_labels_csv(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    with open(path, "w") as fh:
        if labels.ndim == 1:
            for v in labels:
                fh.write(f"{int(v)}\n")
        else:
            for row in labels:
                fh.write(";".join(str(c) for c in np.flatnonzero(row)) + "\n")


def make_splits(count: int, *, test_count: int, train_count: int | None = None,
                seed: int = 0) -> dict[str, np.ndarray]:
    """Shuffled test/retrieval/train index split.

    The retrieval set is everything outside the test set; training draws
    from within the retrieval set (the whole of it by default).
    """
    if not 0 < test_count < count:
        raise InvalidInput(f"test_count must be in (0, {count})")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(count)
    test = np.sort(perm[:test_count])
    retrieval = np.sort(perm[test_count:])
    if train_count is None:
        train = retrieval.copy()
    else:
        if not 0 < train_count <= retrieval.size:
            raise InvalidInput(f"train_count must be in (0, {retrieval.size}]")
        train = np.sort(rng.permutation(retrieval)[:train_count])
    return {"test": test, "retrieval": retrieval, "train": train}


def synth_dataset(classes: int, per_class: int, dim: int, separation: float,
                  seed: int = 0, *, test_count: int | None = None,
                  train_count: int | None = None) -> Dataset:
    """Gaussian clusters at random unit-sphere centers scaled by separation."""
    if separation < 0:
        raise InvalidInput("separation must be non-negative")
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(classes, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    centers *= separation
    features = np.repeat(centers, per_class, axis=0) + rng.normal(
        size=(classes * per_class, dim))
    labels = np.repeat(np.arange(classes), per_class)
    count = classes * per_class
    if test_count is None:
        test_count = max(1, count // 10)
    splits = make_splits(count, test_count=test_count, train_count=train_count,
                         seed=seed)
    return Dataset(features=features, labels=labels, splits=splits)


@dataclass
class Standardizer:
    """Per-dimension zero-mean/unit-variance transform fit on a split."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "Standardizer":
        features = np.asarray(features, dtype=np.float64)
        std = features.std(axis=0)
        return cls(mean=features.mean(axis=0), std=np.where(std > 0, std, 1.0))

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std
