"""Sparse labeled datasets: svmlight I/O, random splits, synthetic blobs."""

from __future__ import annotations

import gzip
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DataError


@dataclass
class Dataset:
    """Examples as a sparse row matrix plus contiguous integer labels.

    ``label_names[k]`` is the raw label that was remapped to class id ``k``;
    raw labels are sorted ascending before remapping, so the mapping is a
    deterministic bijection onto 0..K-1.
    """

    x: sp.csr_array          # (num_examples, n_features) float64
    y: np.ndarray            # (num_examples,) int64, values in 0..K-1
    n_classes: int
    label_names: np.ndarray  # (K,) raw labels, class id -> raw label

    def __post_init__(self):
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError("feature matrix and labels disagree on example count")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ValueError("labels must lie in 0..K-1")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(x=self.x[indices], y=self.y[indices],
                       n_classes=self.n_classes, label_names=self.label_names)

    def example(self, i: int):
        """The i-th example as (sparse 1xN row, class id)."""
        return self.x[[i]], int(self.y[i])


@dataclass
class Split:
    train: Dataset
    validation: Dataset
    test: Dataset
    seed: int


def _open_text(path, mode: str = "rt"):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def load_svmlight(path, n_features: int | None = None) -> Dataset:
    """Parse an svmlight/libsvm text file (gzip accepted for ``*.gz`` paths).

    Lines look like ``label idx:val idx:val ...`` with strictly increasing
    feature indices per line; indices are used verbatim (0-based), and the
    dimensionality is max index + 1 unless ``n_features`` overrides it.
    Raw labels are remapped to 0..K-1 in ascending raw-label order.
    """
    raw_labels: list[float] = []
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    max_index = -1
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                raw_labels.append(float(parts[0]))
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed label {parts[0]!r}") from None
            prev = -1
            for token in parts[1:]:
                try:
                    idx_s, val_s = token.split(":", 1)
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: malformed feature {token!r}") from None
                if idx < 0:
                    raise DataError(f"{path}:{lineno}: negative feature index {idx}")
                if idx <= prev:
                    raise DataError(
                        f"{path}:{lineno}: feature indices must be strictly increasing"
                    )
                prev = idx
                indices.append(idx)
                values.append(val)
            max_index = max(max_index, prev)
            indptr.append(len(indices))
    if not raw_labels:
        raise DataError(f"{path}: no examples")
    n = max_index + 1 if n_features is None else n_features
    if max_index >= n:
        raise DataError(f"{path}: feature index {max_index} exceeds dimension {n}")
    raw = np.asarray(raw_labels)
    names = np.unique(raw)  # sorted ascending
    y = np.searchsorted(names, raw).astype(np.int64)
    if np.all(names == np.floor(names)):
        names = names.astype(np.int64)
    x = sp.csr_array(
        (np.asarray(values, dtype=np.float64),
         np.asarray(indices, dtype=np.int64),
         np.asarray(indptr, dtype=np.int64)),
        shape=(len(raw_labels), n),
    )
    return Dataset(x=x, y=y, n_classes=len(names), label_names=names)


def save_svmlight(dataset: Dataset, path) -> None:
    """Write a dataset back out in svmlight form, using the raw labels."""
    with _open_text(path, "wt") as fh:
        csr = dataset.x
        for i in range(len(dataset)):
            start, end = csr.indptr[i], csr.indptr[i + 1]
            pairs = " ".join(
                f"{csr.indices[j]}:{float(csr.data[j])!r}" for j in range(start, end)
            )
            label = dataset.label_names[dataset.y[i]]
            fh.write(f"{label} {pairs}".rstrip() + "\n")


def max_abs_scale(dataset: Dataset) -> Dataset:
    """Scale each feature column by its maximum absolute value (zero columns untouched)."""
    col_max = np.abs(dataset.x).max(axis=0)
    col_max = np.asarray(col_max.todense()).ravel() if sp.issparse(col_max) else np.asarray(col_max).ravel()
    scale = np.where(col_max > 0, 1.0 / np.where(col_max > 0, col_max, 1.0), 1.0)
    x = dataset.x @ sp.diags_array(scale)
    return Dataset(x=sp.csr_array(x), y=dataset.y.copy(),
                   n_classes=dataset.n_classes, label_names=dataset.label_names)


def split_dataset(dataset: Dataset, seed: int) -> Split:
    """Deterministic 80/10/10 split; rounding remainders go to train."""
    n = len(dataset)
    if n < 10:
        raise DataError(f"need at least 10 examples to split, got {n}")
    n_val = n // 10
    n_test = n // 10
    n_train = n - n_val - n_test
    perm = np.random.default_rng(seed).permutation(n)
    return Split(
        train=dataset.subset(perm[:n_train]),
        validation=dataset.subset(perm[n_train:n_train + n_val]),
        test=dataset.subset(perm[n_train + n_val:]),
        seed=seed,
    )


def make_blobs(k: int, n: int, per_class: int, spread: float, seed: int) -> Dataset:
    """Synthetic corpus: K isotropic Gaussian clusters around unit-norm centers.

    ``spread`` sets the expected noise norm (per-coordinate sigma is
    spread/sqrt(n)), so separability is comparable across dimensionalities.
    """
    if k < 2 or n < 2:
        raise ValueError("need K >= 2 and n >= 2")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((k, n))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    points = np.repeat(centers, per_class, axis=0)
    if spread > 0:
        points = points + (spread / np.sqrt(n)) * rng.standard_normal(points.shape)
    y = np.repeat(np.arange(k, dtype=np.int64), per_class)
    return Dataset(x=sp.csr_array(points), y=y, n_classes=k,
                   label_names=np.arange(k, dtype=np.int64))
