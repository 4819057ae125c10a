"""Datasets: synthetic Gaussian-cluster tasks, client partitioning, CSV ingestion.

A FederatedDataset is a train pool plus shard index arrays (one per client)
and a global held-out test set. Shards always partition the train pool
exactly: disjoint, covering, order-deterministic under the given seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class SyntheticTaskSpec:
    dimension: int
    classes: int
    separation: float       # distance scale between class centers; 0 = pure noise
    noise_scale: float
    samples_per_client: int
    client_count: int
    seed: int

    def __post_init__(self):
        if self.dimension < 1:
            raise DomainError(f"dimension must be at least 1, got {self.dimension}")
        if self.classes < 2:
            raise DomainError(f"need at least 2 classes, got {self.classes}")
        if self.separation < 0 or self.noise_scale < 0:
            raise DomainError("separation and noise scale must be nonnegative")
        if self.samples_per_client < 1 or self.client_count < 1:
            raise DomainError("samples per client and client count must be positive")


@dataclass
class FederatedDataset:
    train_features: np.ndarray
    train_labels: np.ndarray
    shard_indices: tuple
    test_features: np.ndarray
    test_labels: np.ndarray
    partition: str

    @property
    def n_shards(self) -> int:
        return len(self.shard_indices)

    def shard(self, i: int):
        idx = self.shard_indices[i]
        return self.train_features[idx], self.train_labels[idx]

    def test_set(self):
        return self.test_features, self.test_labels

    def shard_sizes(self):
        return [len(ix) for ix in self.shard_indices]


def _empty_test(n_features):
    return np.zeros((0, n_features)), np.zeros(0, dtype=np.int64)


def _as_test(test, n_features):
    if test is None:
        return _empty_test(n_features)
    tx, ty = test
    return np.asarray(tx, dtype=float), np.asarray(ty)


def partition_iid(features, labels, n_clients: int, *, seed: int, test=None) -> FederatedDataset:
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    n = len(labels)
    if n_clients < 1:
        raise DomainError(f"client count must be positive, got {n_clients}")
    if n_clients > n:
        raise DomainError(f"cannot split {n} samples across {n_clients} clients")
    gen = rngmod.RngStreams(seed).stream(rngmod.PARTITION)
    perm = gen.permutation(n)
    shards = tuple(np.sort(part) for part in np.array_split(perm, n_clients))
    tx, ty = _as_test(test, features.shape[1])
    return FederatedDataset(features, labels, shards, tx, ty, "iid")


def partition_dirichlet(features, labels, n_clients: int, beta: float, *, seed: int, test=None) -> FederatedDataset:
    """Label-skewed partition: per class, shard proportions ~ Dirichlet(beta).

    Small beta concentrates each class on few clients. Empty shards are
    repaired by moving one sample at a time from the largest shard, so every
    client ends up with at least one sample.
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    if not np.issubdtype(labels.dtype, np.integer):
        raise DomainError("Dirichlet partitioning needs integer class labels")
    if beta <= 0:
        raise DomainError(f"beta must be positive, got {beta}")
    n = len(labels)
    if n_clients < 1:
        raise DomainError(f"client count must be positive, got {n_clients}")
    if n_clients > n:
        raise DomainError(f"cannot split {n} samples across {n_clients} clients")

    gen = rngmod.RngStreams(seed).stream(rngmod.PARTITION)
    shards = [[] for _ in range(n_clients)]
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[gen.permutation(len(idx))]
        props = gen.dirichlet(np.full(n_clients, beta))
        cuts = (np.cumsum(props) * len(idx)).astype(int)[:-1]
        for shard, part in zip(shards, np.split(idx, cuts)):
            shard.extend(part.tolist())

    # repair: no shard may end up empty
    sizes = np.array([len(s) for s in shards])
    for i in range(n_clients):
        while sizes[i] == 0:
            donor = int(np.argmax(sizes))
            shards[i].append(shards[donor].pop())
            sizes[i] += 1
            sizes[donor] -= 1

    shard_arrays = tuple(np.sort(np.asarray(s, dtype=np.int64)) for s in shards)
    tx, ty = _as_test(test, features.shape[1])
    return FederatedDataset(features, labels, shard_arrays, tx, ty,
                            f"dirichlet(beta={beta})")


def make_synthetic(spec: SyntheticTaskSpec) -> FederatedDataset:
    """Gaussian class clusters, 20% held-out test, IID shards.

    Class centers are orthonormal directions scaled by `separation` when the
    dimension allows, otherwise normalized random directions; either way the
    draw is fixed by the spec seed.
    """
    streams = rngmod.RngStreams(spec.seed)
    gen = streams.stream(rngmod.SYNTH_DATA)

    n_train = spec.client_count * spec.samples_per_client
    total = int(round(n_train / 0.8))
    n_test = total - n_train

    raw = gen.standard_normal((spec.dimension, max(spec.classes, spec.dimension)))
    if spec.classes <= spec.dimension:
        qmat, _ = np.linalg.qr(raw[:, : spec.classes])
        centers = spec.separation * qmat.T
    else:
        dirs = gen.standard_normal((spec.classes, spec.dimension))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        centers = spec.separation * dirs

    labels = gen.integers(0, spec.classes, size=total)
    feats = centers[labels] + spec.noise_scale * gen.standard_normal((total, spec.dimension))

    perm = streams.stream(rngmod.PARTITION).permutation(total)
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    train_x, train_y = feats[train_idx], labels[train_idx]
    # train rows are already in shuffled order, so a sequential split is IID
    shards = tuple(np.sort(p) for p in np.array_split(np.arange(n_train), spec.client_count))
    return FederatedDataset(train_x, train_y, shards, feats[test_idx], labels[test_idx], "iid")


@dataclass(frozen=True)
class CsvSchema:
    label: str
    categoricals: tuple = ()
    missing: str = "drop"        # or "impute_mean"
    label_kind: str = "class"    # or "real"

    def __post_init__(self):
        if self.missing not in ("drop", "impute_mean"):
            raise ConfigError(f"missing policy must be drop or impute_mean, got {self.missing!r}")
        if self.label_kind not in ("class", "real"):
            raise ConfigError(f"label kind must be class or real, got {self.label_kind!r}")


@dataclass
class LoadedTable:
    train_features: np.ndarray
    train_labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    feature_names: list
    label_values: list | None
    clamped_columns: list


_MISSING = "__missing__"


def load_csv(path, schema: CsvSchema, test_fraction: float = 0.2, seed: int = 0) -> LoadedTable:
    """Read a labeled CSV into standardized feature matrices.

    Numerics are standardized to mean 0 / std 1 using train-split statistics
    (constant columns clamp to std 1 and are reported); categoricals are
    one-hot encoded over the levels present after missing-row handling.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty file") from None
        rows = [(lineno, row) for lineno, row in enumerate(reader, start=2)]

    if schema.label not in header:
        raise ConfigError(f"label column {schema.label!r} not in header {header}")
    for col in schema.categoricals:
        if col not in header:
            raise ConfigError(f"categorical column {col!r} not in header {header}")
    col_pos = {name: i for i, name in enumerate(header)}
    numeric_cols = [c for c in header if c != schema.label and c not in schema.categoricals]

    numerics, cats, labels_raw = [], [], []
    for lineno, row in rows:
        if len(row) != len(header):
            raise ConfigError(
                f"{path} line {lineno}: expected {len(header)} fields, got {len(row)}"
            )
        num_vals, has_missing = [], False
        for c in numeric_cols:
            v = row[col_pos[c]].strip()
            if v == "":
                num_vals.append(math.nan)
                has_missing = True
            else:
                try:
                    num_vals.append(float(v))
                except ValueError:
                    raise ConfigError(
                        f"{path} line {lineno}: column {c!r} value {v!r} is not numeric"
                    ) from None
        cat_vals = []
        for c in schema.categoricals:
            v = row[col_pos[c]].strip()
            if v == "":
                cat_vals.append(_MISSING)
                has_missing = True
            else:
                cat_vals.append(v)
        lab = row[col_pos[schema.label]].strip()
        if lab == "":
            has_missing = True
        if has_missing and schema.missing == "drop":
            continue
        if schema.label_kind == "real":
            try:
                lab = float(lab) if lab != "" else math.nan
            except ValueError:
                raise ConfigError(
                    f"{path} line {lineno}: label {lab!r} is not numeric"
                ) from None
        numerics.append(num_vals)
        cats.append(cat_vals)
        labels_raw.append(lab)

    n = len(labels_raw)
    if n < 2:
        raise ConfigError(f"{path}: too few usable rows ({n})")
    num = np.asarray(numerics, dtype=float).reshape(n, len(numeric_cols))

    if schema.label_kind == "class":
        label_values = sorted(set(labels_raw))
        lab_map = {v: i for i, v in enumerate(label_values)}
        labels = np.array([lab_map[v] for v in labels_raw], dtype=np.int64)
    else:
        label_values = None
        labels = np.asarray(labels_raw, dtype=float)

    perm = rngmod.RngStreams(seed).stream(rngmod.PARTITION).permutation(n)
    n_test = int(round(test_fraction * n))
    if n - n_test < 1:
        raise ConfigError(f"test fraction {test_fraction} leaves no training rows")
    test_idx, train_idx = perm[:n_test], perm[n_test:]

    clamped = []
    for j, cname in enumerate(numeric_cols):
        col = num[:, j]
        train_col = col[train_idx]
        avail = train_col[~np.isnan(train_col)]
        mean = float(avail.mean()) if avail.size else 0.0
        col[np.isnan(col)] = mean  # only reachable under impute_mean
        std = float(col[train_idx].std())
        if std < 1e-12:
            std = 1.0
            clamped.append(cname)
        num[:, j] = (col - mean) / std

    onehot_blocks, feature_names = [], list(numeric_cols)
    for j, cname in enumerate(schema.categoricals):
        col = [cats[i][j] for i in range(n)]
        levels = sorted(set(col))
        block = np.zeros((n, len(levels)))
        pos = {v: i for i, v in enumerate(levels)}
        for i, v in enumerate(col):
            block[i, pos[v]] = 1.0
        onehot_blocks.append(block)
        feature_names.extend(f"{cname}={v}" for v in levels)

    feats = np.hstack([num] + onehot_blocks) if onehot_blocks else num
    return LoadedTable(
        train_features=feats[train_idx],
        train_labels=labels[train_idx],
        test_features=feats[test_idx],
        test_labels=labels[test_idx],
        feature_names=feature_names,
        label_values=label_values,
        clamped_columns=clamped,
    )
