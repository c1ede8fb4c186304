"""Synthetic datasets, LIBSVM text I/O and worker sharding."""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field

import numpy as np

from . import rng


class KindHint(str, enum.Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


class PartitionStrategy(str, enum.Enum):
    CONTIGUOUS = "contiguous"
    STRIDED = "strided"
    SHUFFLED_EQUAL = "shuffled"


class LibsvmParseError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Dense design matrix (one row per sample) with its labels."""

    features: np.ndarray
    labels: np.ndarray
    kind_hint: KindHint = KindHint.REGRESSION

    def __post_init__(self):
        A = np.ascontiguousarray(self.features, dtype=np.float64)
        b = np.ascontiguousarray(self.labels, dtype=np.float64).reshape(-1)
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise ValueError(f"features must be a nonempty n x d matrix, got shape {A.shape}")
        if b.shape[0] != A.shape[0]:
            raise ValueError(f"{A.shape[0]} feature rows but {b.shape[0]} labels")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("dataset entries must be finite")
        hint = KindHint(self.kind_hint)
        if hint is KindHint.CLASSIFICATION and not np.all(np.abs(b) == 1.0):
            raise ValueError("classification labels must be -1 or +1")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "features", A)
        object.__setattr__(self, "labels", b)
        object.__setattr__(self, "kind_hint", hint)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.kind_hint)

    def equals(self, other: "Dataset") -> bool:
        return (
            self.kind_hint == other.kind_hint
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )


@dataclass(frozen=True, eq=False)
class Shard:
    owner: int
    indices: np.ndarray = field(repr=False)

    @property
    def local_count(self) -> int:
        return int(self.indices.shape[0])


def generate_classification(n: int, d: int, seed: int) -> Dataset:
    """Two unit-variance Gaussian classes whose means are one unit apart.

    The means sit at +-1/2 along the normalized all-ones direction. Half the
    rows are labelled +1 and half -1.
    """
    if n < 2 or n % 2:
        raise ValueError(f"n must be even and >= 2 for balanced classes, got {n}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    direction = np.full(d, 1.0 / np.sqrt(d))
    A = rng.normals(rng.stream(seed, rng.FEATURES), (n, d))
    b = np.empty(n)
    b[0::2] = 1.0
    b[1::2] = -1.0
    A += 0.5 * b[:, None] * direction[None, :]
    order = rng.stream(seed, rng.SHUFFLE).permutation(n)
    return Dataset(A[order], b[order], KindHint.CLASSIFICATION)


def generate_regression(n: int, d: int, seed: int, noise_sigma: float = 1.0):
    """Gaussian design ``A``, planted weights ``x`` and labels ``b = A x + eps``.

    Returns ``(dataset, x_planted)``.
    """
    if n < 1 or d < 1:
        raise ValueError(f"n and d must be >= 1, got n={n}, d={d}")
    if not noise_sigma >= 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    A = rng.normals(rng.stream(seed, rng.FEATURES), (n, d))
    gen = rng.stream(seed, rng.LABELS)
    x_planted = rng.normals(gen, d)
    eps = noise_sigma * rng.normals(gen, n)
    b = A @ x_planted + eps
    return Dataset(A, b, KindHint.REGRESSION), x_planted


def read_libsvm(path, expected_dim: int | None = None, signed_labels: bool = False) -> Dataset:
    """Read ``label idx:val ...`` lines (1-based indices) into a dense dataset.

    With ``signed_labels`` a {0, 1} label set is mapped to {-1, +1}.
    """
    labels = []
    rows = []
    max_idx = 0
    with open(path, "r", encoding="utf-8", newline=None) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                label = float(tokens[0])
            except ValueError:
                raise LibsvmParseError(f"line {lineno}: bad label {tokens[0]!r}") from None
            entries = {}
            for tok in tokens[1:]:
                idx_s, sep, val_s = tok.partition(":")
                try:
                    if not sep:
                        raise ValueError
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise LibsvmParseError(f"line {lineno}: malformed token {tok!r}") from None
                if idx < 1:
                    raise LibsvmParseError(f"line {lineno}: index {idx} is not 1-based")
                if expected_dim is not None and idx > expected_dim:
                    raise LibsvmParseError(
                        f"line {lineno}: index {idx} exceeds expected dimension {expected_dim}"
                    )
                entries[idx - 1] = val
                max_idx = max(max_idx, idx)
            labels.append(label)
            rows.append(entries)
    if not rows:
        raise LibsvmParseError(f"{os.fspath(path)}: no samples")
    d = expected_dim if expected_dim is not None else max_idx
    if d < 1:
        raise LibsvmParseError(f"{os.fspath(path)}: no features")
    A = np.zeros((len(rows), d))
    for r, entries in enumerate(rows):
        for j, v in entries.items():
            A[r, j] = v
    b = np.asarray(labels)
    if signed_labels and set(np.unique(b)) <= {0.0, 1.0}:
        b = 2.0 * b - 1.0
    hint = KindHint.CLASSIFICATION if np.all(np.abs(b) == 1.0) else KindHint.REGRESSION
    return Dataset(A, b, hint)


def write_libsvm(ds: Dataset, path) -> None:
    """Write nonzero entries with 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for a, label in zip(ds.features, ds.labels):
            toks = [format(label, ".17g")]
            toks.extend(f"{j + 1}:{format(v, '.17g')}" for j, v in enumerate(a) if v != 0.0)
            fh.write(" ".join(toks) + "\n")


def partition(ds: Dataset, p: int, strategy="contiguous", seed: int = 0) -> list[Shard]:
    """Split sample indices into ``p`` disjoint shards covering ``range(n)``.

    Indices inside every shard are sorted ascending, so a single shard is the
    identity ordering whatever the strategy.
    """
    n = ds.n if isinstance(ds, Dataset) else int(ds)
    strategy = PartitionStrategy(strategy)
    if p < 1:
        raise ValueError(f"worker count must be >= 1, got {p}")
    if p > n:
        raise ValueError(f"cannot split {n} samples over {p} workers")
    if strategy is PartitionStrategy.CONTIGUOUS:
        pieces = np.array_split(np.arange(n), p)
    elif strategy is PartitionStrategy.STRIDED:
        pieces = [np.arange(s, n, p) for s in range(p)]
    else:
        perm = rng.stream(seed, rng.PARTITION).permutation(n)
        pieces = [np.sort(chunk) for chunk in np.array_split(perm, p)]
    return [Shard(s, np.ascontiguousarray(idx, dtype=np.int64)) for s, idx in enumerate(pieces)]
