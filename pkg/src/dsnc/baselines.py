"""Comparison systems: a continuous-hidden-layer MLP and an ECOC classifier.

The MLP reuses the trainer loop with the stochastic layer replaced by a
plain sigmoid (the code size doubles as the hidden width). The ECOC baseline
assigns each class a random distinct codeword and trains one independent
logistic classifier per bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .codes import pack_bits_many
from .data import Split
from .errors import DataError
from .linalg import AdamState, adam_step, sigmoid
from .model import DsncModel, init_model
from .trainer import TrainConfig, fit


@dataclass
class MlpModel(DsncModel):
    """Same parameter shapes as the stochastic model, deterministic hidden layer."""

    kind: ClassVar[str] = "mlp"


def train_mlp(split: Split, config: TrainConfig):
    """Train the MLP baseline with the shared loop; returns (model, metrics)."""
    model = init_model(split.train.n_features, config.code_size,
                       split.train.n_classes, seed=config.seed, cls=MlpModel)
    return fit(model, split, config)


def generate_code_matrix(k: int, c: int, seed: int, max_attempts: int = 10000) -> np.ndarray:
    """Random K x c binary code matrix with distinct rows and no constant column."""
    if c < 1 or k < 2:
        raise ValueError("need c >= 1 and K >= 2")
    if k > 2 ** c:
        raise DataError(f"code space too small: 2^{c} < {k} classes")
    rng = np.random.default_rng([seed, 4])
    for _ in range(max_attempts):
        rows: list[tuple] = []
        seen = set()
        tries = 0
        while len(rows) < k and tries < max_attempts:
            row = tuple(rng.integers(0, 2, size=c).tolist())
            tries += 1
            if row not in seen:
                seen.add(row)
                rows.append(row)
        if len(rows) < k:
            continue
        matrix = np.asarray(rows, dtype=np.uint8)
        col_sums = matrix.sum(axis=0)
        if np.all(col_sums > 0) and np.all(col_sums < k):
            return matrix
    raise DataError(f"could not draw a valid {k}x{c} code matrix")


@dataclass
class EcocModel:
    """Per-bit linear classifiers plus the class code matrix."""

    code_matrix: np.ndarray  # (K, c) uint8, rows distinct
    w: np.ndarray            # (c, n) one row of weights per bit classifier
    b: np.ndarray            # (c,)

    kind: ClassVar[str] = "ecoc"

    @property
    def input_dim(self) -> int:
        return self.w.shape[1]

    @property
    def code_size(self) -> int:
        return self.w.shape[0]

    @property
    def n_classes(self) -> int:
        return self.code_matrix.shape[0]

    def packed_rows(self) -> np.ndarray:
        return pack_bits_many(self.code_matrix)


def train_ecoc(split: Split, c: int, seed: int, epochs: int = 30,
               lr: float = 1e-3, batch_size: int = 256) -> EcocModel:
    """Fit one logistic classifier per code bit on targets C[y][j].

    The bit problems share mini-batches but are mathematically independent
    (elementwise sigmoid cross-entropy, no cross terms), so training them as
    one vectorized layer gives the same result as c separate runs.
    """
    train = split.train
    k = train.n_classes
    if len(np.unique(train.y)) < 2:
        raise DataError("degenerate bit targets: training set has a single class")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    code_matrix = generate_code_matrix(k, c, seed)
    targets = code_matrix[train.y].astype(np.float64)  # (N, c)

    n = train.n_features
    rng = np.random.default_rng([seed, 5])
    bound = np.sqrt(6.0 / (n + 1))
    w = rng.uniform(-bound, bound, size=(c, n))
    b = np.zeros(c)
    sw = AdamState.for_params(w, lr=lr, name="ecoc.w")
    sb = AdamState.for_params(b, lr=lr, name="ecoc.b")

    num = len(train)
    for epoch in range(1, epochs + 1):
        perm = np.random.default_rng([seed, 6, epoch]).permutation(num)
        for start in range(0, num, batch_size):
            take = perm[start:start + batch_size]
            xb = train.x[take]
            tb = targets[take]
            z = np.asarray(xb @ w.T) + b
            g = (sigmoid(z) - tb) / len(take)  # grad of mean BCE wrt logits
            w = adam_step(sw, w, np.asarray((xb.T @ g)).T)
            b = adam_step(sb, b, g.sum(axis=0))
    return EcocModel(code_matrix=code_matrix, w=w, b=b)


def ecoc_predict_bits(model: EcocModel, x_matrix) -> np.ndarray:
    """Thresholded per-bit classifier outputs for each row of ``x_matrix``."""
    z = np.asarray(x_matrix @ model.w.T) + model.b
    return (z >= 0).astype(np.uint8)  # sigmoid(z) >= 0.5, ties to 1


def ecoc_predict(model: EcocModel, x) -> int:
    """Predicted class: nearest code-matrix row to the predicted bits."""
    import scipy.sparse as sp

    row = x if sp.issparse(x) else np.asarray(x, dtype=np.float64).reshape(1, -1)
    bits = ecoc_predict_bits(model, row)[0]
    dists = (bits[None, :] != model.code_matrix).sum(axis=1)
    return int(dists.argmin())  # argmin ties -> smallest class id


def ecoc_accuracy(model: EcocModel, dataset) -> float:
    bits = ecoc_predict_bits(model, dataset.x)
    dists = (bits[:, None, :] != model.code_matrix[None, :, :]).sum(axis=2)
    pred = dists.argmin(axis=1)
    return float((pred == dataset.y).mean())
