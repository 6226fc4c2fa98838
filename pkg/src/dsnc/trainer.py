"""Training loop, evaluation across decoders, and latent-space statistics.

The loop is mini-batch Adam over the joint encoder/decoder objective, with a
per-epoch validation pass that drives the adaptive regularization
coefficients, best-checkpoint selection, and early stopping. Everything is
derived from explicit seeds: shuffles from (seed, epoch), per-example
sampling streams from (seed, epoch, example index), so a run is bitwise
reproducible regardless of how callers parallelize evaluation.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError, NumericError
from .linalg import AdamState, adam_step, nll_batch, softmax_batch
from .codes import pack_bits_many
from .data import Dataset, Split
from .model import encode_probs_batch, threshold_bits
from .regularizer import RegCoeffs, adapt_coeffs, pair_penalty

METRICS_COLUMNS = ["epoch", "train_loss", "val_acc_linear", "beta", "gamma",
                   "distinct_codes", "intra_mean", "inter_mean", "wall_ms"]

_STREAM_SHUFFLE = 1
_STREAM_SAMPLE = 2
_STREAM_STATS = 3


@dataclass
class TrainConfig:
    code_size: int
    epochs: int
    batch_size: int = 256
    lr: float = 1e-3
    estimator: str = "ste"            # "ste" or "reinforce"
    reinforce_samples: int = 1
    reinforce_baseline: bool = False
    seed: int = 0
    beta: float = 0.01                # initial intra-class weight
    gamma: float = 0.01               # initial inter-class weight
    regularization: bool = True
    beta_bounds: tuple[float, float] = (1e-6, 10.0)
    gamma_bounds: tuple[float, float] = (1e-6, 10.0)
    val_cadence: int = 1              # epochs between validation passes
    early_stop_patience: int = 20     # validation passes without improvement
    log_timing: bool = False          # keep wall_ms at 0 so outputs stay bit-reproducible

    def validate(self, for_mlp: bool = False) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.code_size < 1:
            raise ValueError("code_size must be >= 1")
        if self.batch_size < 1 or (self.regularization and self.batch_size < 2):
            raise ValueError("batch_size must be >= 2 when regularization is on")
        if not for_mlp and self.estimator not in ("ste", "reinforce"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.reinforce_samples < 1:
            raise ValueError("reinforce_samples must be >= 1")
        if self.val_cadence < 1:
            raise ValueError("val_cadence must be >= 1")


@dataclass
class CodeStats:
    """Latent-space summary: pairwise Hamming distances and code diversity.

    ``inter_*`` (and ``intra_*``) are None when the dataset has no pair of
    that kind, rather than NaN.
    """

    intra_mean: Optional[float]
    intra_std: Optional[float]
    inter_mean: Optional[float]
    inter_std: Optional[float]
    distinct_codes: int


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_acc_linear: float
    beta: float
    gamma: float
    distinct_codes: int
    intra_mean: Optional[float]
    inter_mean: Optional[float]
    wall_ms: int = 0

    def row(self) -> list:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return v
        return [fmt(getattr(self, name)) for name in METRICS_COLUMNS]


def example_rng(seed: int, epoch: int, example: int) -> np.random.Generator:
    """Per-example sampling substream, stable across batch composition."""
    return np.random.default_rng([seed, _STREAM_SAMPLE, epoch, int(example)])


def _linear_logits(model, x_matrix) -> np.ndarray:
    probs, _ = encode_probs_batch(model, x_matrix)
    hidden = threshold_bits(probs).astype(np.float64) if model.kind == "dsnc" else probs
    return hidden @ model.w_dec.T + model.b_dec


def _linear_accuracy(model, dataset: Dataset) -> float:
    pred = _linear_logits(model, dataset.x).argmax(axis=1)
    return float((pred == dataset.y).mean())


def _sample_bits(probs: np.ndarray, examples: np.ndarray, seed: int, epoch: int,
                 n_samples: int = 1) -> np.ndarray:
    """Sample (B, n_samples, c) Bernoulli bits from per-example streams."""
    b, c = probs.shape
    u = np.empty((b, n_samples, c))
    for row, ex in enumerate(examples):
        u[row] = example_rng(seed, epoch, ex).random((n_samples, c))
    return (u < probs[:, None, :]).astype(np.float64)


def _batch_gradients(model, xb, yb, probs, pre, config: TrainConfig,
                     coeffs: Optional[RegCoeffs], examples: np.ndarray, epoch: int):
    """Loss and parameter gradients for one mini-batch (mean over examples)."""
    b = probs.shape[0]
    grad_probs = np.zeros_like(probs)
    penalty = 0.0
    if coeffs is not None and b >= 2:
        penalty, grad_probs = pair_penalty(probs, yb, coeffs)

    if model.kind != "dsnc":
        # deterministic hidden layer: exact backprop, no sampling
        hidden = probs
        logits = hidden @ model.w_dec.T + model.b_dec
        losses = nll_batch(logits, yb)
        g = softmax_batch(logits)
        g[np.arange(b), yb] -= 1.0
        g /= b
        grad_w_dec = g.T @ hidden
        grad_b_dec = g.sum(axis=0)
        grad_probs = grad_probs + g @ model.w_dec
        mean_loss = float(losses.mean())
    elif config.estimator == "ste":
        bits = _sample_bits(probs, examples, config.seed, epoch)[:, 0, :]
        logits = bits @ model.w_dec.T + model.b_dec
        losses = nll_batch(logits, yb)
        g = softmax_batch(logits)
        g[np.arange(b), yb] -= 1.0
        g /= b
        grad_w_dec = g.T @ bits
        grad_b_dec = g.sum(axis=0)
        # straight-through: gradient wrt the sampled code passes to the probabilities
        grad_probs = grad_probs + g @ model.w_dec
        mean_loss = float(losses.mean())
    else:
        m = config.reinforce_samples
        bits = _sample_bits(probs, examples, config.seed, epoch, m)  # (B, M, c)
        flat = bits.reshape(b * m, -1)
        logits = flat @ model.w_dec.T + model.b_dec
        y_rep = np.repeat(yb, m)
        losses = nll_batch(logits, y_rep).reshape(b, m)
        g = softmax_batch(logits)
        g[np.arange(b * m), y_rep] -= 1.0
        g /= b * m
        grad_w_dec = g.T @ flat
        grad_b_dec = g.sum(axis=0)
        weights = losses.copy()
        if config.reinforce_baseline and m > 1:
            weights -= (losses.sum(axis=1, keepdims=True) - losses) / (m - 1)
        score = (bits - probs[:, None, :]) * weights[:, :, None]
        grad_pre_score = score.mean(axis=1) / b
        mean_loss = float(losses.mean(axis=1).mean())
        grad_pre = grad_pre_score + grad_probs * probs * (1.0 - probs)
        grad_w_enc = np.asarray((xb.T @ grad_pre)).T
        grad_b_enc = grad_pre.sum(axis=0)
        total = mean_loss + penalty
        return total, grad_w_enc, grad_b_enc, grad_w_dec, grad_b_dec

    grad_pre = grad_probs * probs * (1.0 - probs)
    grad_w_enc = np.asarray((xb.T @ grad_pre)).T
    grad_b_enc = grad_pre.sum(axis=0)
    total = mean_loss + penalty
    return total, grad_w_enc, grad_b_enc, grad_w_dec, grad_b_dec


def fit(model, split: Split, config: TrainConfig):
    """Train on the split's train set; returns (best checkpoint, per-epoch metrics).

    Per epoch: deterministic shuffle, mini-batch forward/backward with the
    configured estimator plus the pairwise penalty, Adam updates, then (at
    the validation cadence) a linear-decode validation pass that adapts the
    regularization coefficients and checkpoints on improvement. Training
    stops early after ``early_stop_patience`` validation passes without a
    new best.
    """
    config.validate(for_mlp=model.kind != "dsnc")
    if model.code_size != config.code_size:
        raise ValueError(
            f"model code size {model.code_size} != config code size {config.code_size}"
        )
    for part in (split.train, split.validation):
        if len(part) and int(part.y.max()) >= model.n_classes:
            raise ValueError("split contains labels outside the model's class range")
    if len(split.train) == 0 or len(split.validation) == 0:
        raise DataError("train and validation sets must be nonempty")

    model = model.copy()
    n = len(split.train)
    x_train, y_train = split.train.x, split.train.y
    coeffs = None
    if config.regularization:
        coeffs = RegCoeffs(beta=config.beta, gamma=config.gamma,
                           beta_min=config.beta_bounds[0], beta_max=config.beta_bounds[1],
                           gamma_min=config.gamma_bounds[0], gamma_max=config.gamma_bounds[1])
    states = {name: AdamState.for_params(arr, lr=config.lr, name=name)
              for name, arr in model.param_blocks()}

    best_params = None
    best_acc = -1.0
    prev_val: Optional[float] = None
    last_val = 0.0
    stale = 0
    metrics: list[EpochMetrics] = []

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        perm = np.random.default_rng([config.seed, _STREAM_SHUFFLE, epoch]).permutation(n)
        loss_sum = 0.0
        n_batches = 0
        for start in range(0, n, config.batch_size):
            take = perm[start:start + config.batch_size]
            xb = x_train[take]
            yb = y_train[take]
            probs, pre = encode_probs_batch(model, xb)
            batch_coeffs = coeffs if len(take) >= 2 else None
            loss, gwe, gbe, gwd, gbd = _batch_gradients(
                model, xb, yb, probs, pre, config, batch_coeffs, take, epoch)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}")
            model.w_enc = adam_step(states["enc.w"], model.w_enc, gwe)
            model.b_enc = adam_step(states["enc.b"], model.b_enc, gbe)
            model.w_dec = adam_step(states["dec.w"], model.w_dec, gwd)
            model.b_dec = adam_step(states["dec.b"], model.b_dec, gbd)
            loss_sum += loss
            n_batches += 1

        stop = False
        if epoch % config.val_cadence == 0:
            val_acc = _linear_accuracy(model, split.validation)
            if coeffs is not None and prev_val is not None:
                coeffs = adapt_coeffs(coeffs, prev_val, val_acc)
            prev_val = val_acc
            last_val = val_acc
            if val_acc > best_acc:
                best_acc = val_acc
                best_params = [arr.copy() for _, arr in model.param_blocks()]
                stale = 0
            else:
                stale += 1
                if stale >= config.early_stop_patience:
                    stop = True

        stats = code_stats(model, split.train, seed=config.seed)
        wall_ms = int(round((time.perf_counter() - t0) * 1000)) if config.log_timing else 0
        metrics.append(EpochMetrics(
            epoch=epoch,
            train_loss=loss_sum / max(n_batches, 1),
            val_acc_linear=last_val,
            beta=coeffs.beta if coeffs is not None else 0.0,
            gamma=coeffs.gamma if coeffs is not None else 0.0,
            distinct_codes=stats.distinct_codes,
            intra_mean=stats.intra_mean,
            inter_mean=stats.inter_mean,
            wall_ms=wall_ms,
        ))
        if stop:
            break

    if best_params is not None:
        model.w_enc, model.b_enc, model.w_dec, model.b_dec = best_params
    return model, metrics


def evaluate(model, dataset: Dataset, decoder: str = "linear",
             index=None, mih=None, table=None, threads: int = 1) -> float:
    """Accuracy of the model on ``dataset`` under the chosen decoder.

    ``linear`` thresholds the code and applies the trained decoder; ``nn``
    and ``mih`` look the code up in a :class:`~dsnc.hamming.CodeIndex`;
    ``table`` uses a precomputed exhaustive :class:`~dsnc.hamming.CodeTable`.
    """
    from . import hamming  # local import; hamming depends on model, not on trainer

    if len(dataset) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    if decoder == "linear":
        return _linear_accuracy(model, dataset)
    probs, _ = encode_probs_batch(model, dataset.x)
    words = pack_bits_many(threshold_bits(probs))
    if decoder == "nn":
        if index is None:
            raise ValueError("nn decoding requires a code index")
        pred, _ = hamming.nn_decode_many(index, words, threads=threads)
    elif decoder == "mih":
        if index is None or mih is None:
            raise ValueError("mih decoding requires a code index and substring tables")
        pred, _, _ = hamming.mih_query_many(mih, index, words, threads=threads)
    elif decoder == "table":
        if table is None:
            raise ValueError("table decoding requires an enumerated code table")
        if model.code_size > 64:
            raise ValueError("table decoding supports at most 64-bit codes")
        pred = table.classes[words[:, 0]]
    else:
        raise ValueError(f"unknown decoder {decoder!r}")
    return float((pred == dataset.y).mean())


def code_stats(model, dataset: Dataset, seed: int = 0, max_exact: int = 5000,
               sample_pairs: int = 10 ** 6) -> CodeStats:
    """Intra-/inter-class Hamming distance statistics of threshold codes.

    All pairs are used when the dataset has at most ``max_exact`` examples;
    beyond that, ``sample_pairs`` seeded random pairs estimate the same
    quantities. The distinct-code count is always exact.
    """
    n = len(dataset)
    if n < 2:
        raise DataError("code stats need at least 2 examples")
    probs, _ = encode_probs_batch(model, dataset.x)
    words = pack_bits_many(threshold_bits(probs))
    distinct = int(np.unique(words, axis=0).shape[0])
    y = dataset.y

    if n <= max_exact:
        acc = {True: [0, 0.0, 0.0], False: [0, 0.0, 0.0]}  # count, sum, sumsq
        chunk = max(1, (1 << 22) // max(words.shape[1] * n, 1))
        for lo in range(0, n - 1, chunk):
            hi = min(lo + chunk, n - 1)
            d = np.bitwise_count(words[lo:hi, None, :] ^ words[None, :, :]).sum(
                axis=2, dtype=np.int64)
            same = y[lo:hi, None] == y[None, :]
            cols = np.arange(n)[None, :] > np.arange(lo, hi)[:, None]  # j > i only
            for intra in (True, False):
                mask = cols & (same if intra else ~same)
                vals = d[mask]
                acc[intra][0] += vals.size
                acc[intra][1] += float(vals.sum())
                acc[intra][2] += float((vals.astype(np.float64) ** 2).sum())
    else:
        rng = np.random.default_rng([seed, _STREAM_STATS])
        acc = {True: [0, 0.0, 0.0], False: [0, 0.0, 0.0]}
        remaining = sample_pairs
        while remaining > 0:
            take = min(remaining, 1 << 20)
            i = rng.integers(0, n, size=take)
            j = rng.integers(0, n, size=take)
            keep = i != j
            i, j = i[keep], j[keep]
            remaining -= len(i)
            d = np.bitwise_count(words[i] ^ words[j]).sum(axis=1, dtype=np.int64)
            same = y[i] == y[j]
            for intra in (True, False):
                vals = d[same] if intra else d[~same]
                acc[intra][0] += vals.size
                acc[intra][1] += float(vals.sum())
                acc[intra][2] += float((vals.astype(np.float64) ** 2).sum())

    def stats_of(count, total, sumsq):
        if count == 0:
            return None, None
        mean = total / count
        var = max(sumsq / count - mean * mean, 0.0)
        return mean, float(np.sqrt(var))

    intra_mean, intra_std = stats_of(*acc[True])
    inter_mean, inter_std = stats_of(*acc[False])
    return CodeStats(intra_mean=intra_mean, intra_std=intra_std,
                     inter_mean=inter_mean, inter_std=inter_std,
                     distinct_codes=distinct)


def write_metrics_csv(metrics: list[EpochMetrics], path) -> None:
    """Write the per-epoch log; one row per epoch, stable float formatting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for row in metrics:
            writer.writerow(row.row())
