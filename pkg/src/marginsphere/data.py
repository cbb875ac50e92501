"""Synthetic generators, CSV ingestion, normalization and split construction.

Labels are +1 (normal) and -1 (abnormal) throughout. Splits keep only a small
fraction of the abnormal rows in the training portion; the discarded abnormal
rows never reappear in validation or test.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, MarginSphereError
from .sphere import ABNORMAL, NORMAL


class ParseError(MarginSphereError):
    pass


@dataclass
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray  # zero-variance columns stored with std 1 so scaling is a no-op

    @classmethod
    def fit(cls, X):
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std > 0.0, std, 1.0)
        return cls(mean=mean, std=std)

    def apply(self, X):
        return (X - self.mean) / self.std

    def invert(self, X):
        return X * self.std + self.mean


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    name: str = "dataset"
    feature_stats: FeatureStats | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise DomainError("X must be (n, d) with one label per row")
        if not np.all(np.isfinite(self.X)):
            raise DomainError("dataset contains NaN or Inf features")
        if not np.any(self.y == NORMAL):
            raise DomainError("dataset has no normal rows")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def normal_indices(self):
        return np.flatnonzero(self.y == NORMAL)

    def abnormal_indices(self):
        return np.flatnonzero(self.y == ABNORMAL)


@dataclass
class SplitDataset:
    """Train/validation/test views over one (already normalized) dataset."""

    dataset: LabeledDataset
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    anomaly_train_fraction: float = 0.10

    def __post_init__(self):
        sets = [set(self.train_idx), set(self.val_idx), set(self.test_idx)]
        if (sets[0] & sets[1]) or (sets[0] & sets[2]) or (sets[1] & sets[2]):
            raise DomainError("split index sets overlap")

    def _view(self, idx):
        return self.dataset.X[idx], self.dataset.y[idx]

    @property
    def train(self):
        return self._view(self.train_idx)

    @property
    def val(self):
        return self._view(self.val_idx)

    @property
    def test(self):
        return self._view(self.test_idx)

    def manifest(self):
        ds = self.dataset
        return {
            "name": ds.name,
            "n": int(ds.n),
            "d": int(ds.d),
            "n_normal": int(np.sum(ds.y == NORMAL)),
            "n_abnormal": int(np.sum(ds.y == ABNORMAL)),
            "anomaly_train_fraction": self.anomaly_train_fraction,
            "train_idx": [int(i) for i in self.train_idx],
            "val_idx": [int(i) for i in self.val_idx],
            "test_idx": [int(i) for i in self.test_idx],
        }

    def write_manifest(self, path):
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def generate_moons(n, noise_std=0.1, seed=0):
    """Two crescents: upper unit semicircle (normal) vs a lower semicircle
    shifted by (1.0, -0.5) (abnormal), with isotropic Gaussian noise."""
    if n < 2:
        raise DomainError("need n >= 2")
    if noise_std < 0.0:
        raise DomainError("noise_std must be >= 0")
    rng = np.random.default_rng(seed)
    n_normal = n // 2
    n_abnormal = n - n_normal
    t1 = np.linspace(0.0, math.pi, n_normal)
    t2 = np.linspace(0.0, math.pi, n_abnormal)
    upper = np.column_stack([np.cos(t1), np.sin(t1)])
    lower = np.column_stack([np.cos(t2) + 1.0, -np.sin(t2) - 0.5])
    X = np.vstack([upper, lower])
    if noise_std > 0.0:
        X = X + rng.normal(scale=noise_std, size=X.shape)
    y = np.concatenate([np.full(n_normal, NORMAL), np.full(n_abnormal, ABNORMAL)])
    return LabeledDataset(X=X, y=y, name="moons")


SPIRAL_THETA_MIN = 0.5 * math.pi  # keeps both arms away from the origin


def generate_spiral(n, noise_std=0.13, turns=1.0, seed=0):
    """Two interleaved Archimedean arms r = a*theta, the second phase-shifted
    by pi. Arm 1 is normal, arm 2 abnormal."""
    if n < 2:
        raise DomainError("need n >= 2")
    if turns <= 0.0:
        raise DomainError("turns must be > 0")
    if noise_std < 0.0:
        raise DomainError("noise_std must be >= 0")
    rng = np.random.default_rng(seed)
    n_normal = n // 2
    n_abnormal = n - n_normal
    theta_max = 2.0 * math.pi * turns
    a = 1.0 / theta_max  # max radius 1
    t1 = np.linspace(SPIRAL_THETA_MIN, theta_max, n_normal)
    t2 = np.linspace(SPIRAL_THETA_MIN, theta_max, n_abnormal)
    arm1 = np.column_stack([a * t1 * np.cos(t1), a * t1 * np.sin(t1)])
    arm2 = np.column_stack([a * t2 * np.cos(t2 + math.pi), a * t2 * np.sin(t2 + math.pi)])
    X = np.vstack([arm1, arm2])
    if noise_std > 0.0:
        X = X + rng.normal(scale=noise_std, size=X.shape)
    y = np.concatenate([np.full(n_normal, NORMAL), np.full(n_abnormal, ABNORMAL)])
    return LabeledDataset(X=X, y=y, name="spiral")


def load_csv(path, label_column, normal_label, name=None):
    """Read a rectangular numeric CSV with one label column.

    label_column may be a header name or a 0-based column index. Rows whose
    label equals normal_label (string comparison) become +1; every other
    label value becomes -1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ParseError(f"{path}: empty file")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"{path}: row {i} has {len(row)} cells, expected {width}")

    header = None
    first = rows[0]
    if any(not _is_number(cell) for cell in first):
        header = [cell.strip() for cell in first]
        rows = rows[1:]
        if not rows:
            raise ParseError(f"{path}: header but no data rows")

    if isinstance(label_column, int):
        label_idx = label_column
        if not (0 <= label_idx < width):
            raise ParseError(f"{path}: label column index {label_idx} out of range")
    else:
        if header is None or label_column not in header:
            raise ParseError(f"{path}: label column {label_column!r} not found")
        label_idx = header.index(label_column)

    features, labels = [], []
    for i, row in enumerate(rows):
        vals = []
        for j, cell in enumerate(row):
            if j == label_idx:
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise ParseError(f"{path}: non-numeric cell at row {i}, col {j}: {cell!r}")
        features.append(vals)
        labels.append(NORMAL if row[label_idx].strip() == str(normal_label) else ABNORMAL)
    X = np.array(features, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ParseError(f"{path}: non-finite feature values")
    return LabeledDataset(X=X, y=np.array(labels), name=name or os.path.basename(path))


def _is_number(cell):
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _subsample_abnormal(idx, fraction, rng):
    """Keep round-half-up(fraction * len) abnormal rows, at least one."""
    if len(idx) == 0:
        return idx
    keep = max(1, int(math.floor(fraction * len(idx) + 0.5)))
    chosen = rng.permutation(len(idx))[:keep]
    return np.sort(idx[np.sort(chosen)])


def _assemble_split(ds, train_idx, val_idx, test_idx, anomaly_fraction, rng, name=None):
    train_idx = np.asarray(train_idx)
    abn_train = train_idx[ds.y[train_idx] == ABNORMAL]
    kept_abn = _subsample_abnormal(abn_train, anomaly_fraction, rng)
    train_idx = np.sort(np.concatenate([train_idx[ds.y[train_idx] == NORMAL], kept_abn]))

    stats = FeatureStats.fit(ds.X[train_idx])
    normalized = LabeledDataset(
        X=stats.apply(ds.X), y=ds.y.copy(), name=name or ds.name, feature_stats=stats
    )
    return SplitDataset(
        dataset=normalized,
        train_idx=train_idx,
        val_idx=np.sort(np.asarray(val_idx)),
        test_idx=np.sort(np.asarray(test_idx)),
        anomaly_train_fraction=anomaly_fraction,
    )


def make_split(ds, anomaly_fraction=0.10, val_fraction=0.15, test_fraction=0.2, seed=0):
    """Stratified train/val/test split with abnormal-row subsampling.

    Z-score normalization is fitted on the (subsampled) training rows and
    applied to the whole dataset; the returned SplitDataset holds the
    normalized copy.
    """
    if not 0.0 <= val_fraction < 1.0 or not 0.0 <= test_fraction < 1.0:
        raise DomainError("fractions must lie in [0, 1)")
    if val_fraction + test_fraction >= 1.0:
        raise DomainError("val_fraction + test_fraction must be < 1")
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for cls in (NORMAL, ABNORMAL):
        idx = np.flatnonzero(ds.y == cls)
        if len(idx) == 0:
            continue
        idx = rng.permutation(idx)
        n_test = int(round(test_fraction * len(idx)))
        n_val = int(round(val_fraction * len(idx)))
        test.append(idx[:n_test])
        val.append(idx[n_test:n_test + n_val])
        train.append(idx[n_test + n_val:])
    return _assemble_split(
        ds,
        np.concatenate(train),
        np.concatenate(val) if val else np.array([], dtype=int),
        np.concatenate(test) if test else np.array([], dtype=int),
        anomaly_fraction,
        rng,
    )


def kfold(ds, k=5, anomaly_fraction=0.10, val_fraction=0.15, seed=0):
    """Stratified k-fold splits; fold i is the test set of split i.

    Validation is carved out of each fold's training portion. Normalization
    is refitted per fold on that fold's training rows.
    """
    if k < 2:
        raise DomainError("need k >= 2")
    rng = np.random.default_rng(seed)
    class_folds = {}
    for cls in (NORMAL, ABNORMAL):
        idx = np.flatnonzero(ds.y == cls)
        if len(idx) > 0 and len(idx) < k:
            raise DomainError(f"class {cls} has {len(idx)} rows, fewer than k={k}")
        class_folds[cls] = np.array_split(rng.permutation(idx), k)

    splits = []
    for fold in range(k):
        test = np.concatenate([class_folds[c][fold] for c in class_folds])
        train, val = [], []
        for cls in (NORMAL, ABNORMAL):
            rest = np.concatenate([class_folds[cls][j] for j in range(k) if j != fold])
            rest = rng.permutation(rest)
            n_val = int(round(val_fraction * len(rest)))
            val.append(rest[:n_val])
            train.append(rest[n_val:])
        splits.append(
            _assemble_split(
                ds,
                np.concatenate(train),
                np.concatenate(val),
                test,
                anomaly_fraction,
                rng,
                name=f"{ds.name}[fold {fold}]",
            )
        )
    return splits
