"""Intra-class attraction / inter-class repulsion on code distributions.

The penalty pulls same-class Bernoulli parameter vectors together and pushes
different-class ones apart. Each pairwise sum is taken over the mini-batch
and normalized by its pair count, so the coefficients mean the same thing at
any batch size. The coefficients adapt during training: doubled when
validation accuracy rises, halved when it falls, always clamped to bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class RegCoeffs:
    beta: float = 0.01        # intra-class attraction weight
    gamma: float = 0.01       # inter-class repulsion weight
    beta_min: float = 1e-6
    beta_max: float = 10.0
    gamma_min: float = 1e-6
    gamma_max: float = 10.0

    def __post_init__(self):
        for lo, v, hi, name in ((self.beta_min, self.beta, self.beta_max, "beta"),
                                (self.gamma_min, self.gamma, self.gamma_max, "gamma")):
            if not (0.0 <= lo <= v <= hi):
                raise ValueError(f"{name}={v} outside clamp interval [{lo}, {hi}]")


def pair_penalty(probs: np.ndarray, labels: np.ndarray,
                 coeffs: RegCoeffs) -> tuple[float, np.ndarray]:
    """Pairwise squared-distance penalty over one batch of code distributions.

    penalty = beta * mean_{same-class pairs} ||p - p'||^2
            - gamma * mean_{cross-class pairs} ||p - p'||^2

    Returns the penalty and its analytic gradient wrt each row of ``probs``.
    A pair class with no pairs in the batch contributes zero.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    b = probs.shape[0]
    if b < 2:
        raise ValueError("pair penalty needs a batch of at least 2 examples")
    if labels.shape[0] != b:
        raise ValueError("labels and probs disagree on batch size")

    _, inv = np.unique(labels, return_inverse=True)
    counts = np.bincount(inv)
    class_sum = np.zeros((len(counts), probs.shape[1]))
    np.add.at(class_sum, inv, probs)
    sq = (probs * probs).sum(axis=1)
    class_sq = np.bincount(inv, weights=sq)

    # sum over unordered pairs within a group: m * sum||p||^2 - ||sum p||^2
    intra_sum = float((counts * class_sq).sum() - (class_sum * class_sum).sum())
    total_sum = float(b * sq.sum() - (probs.sum(axis=0) ** 2).sum())
    inter_sum = total_sum - intra_sum

    n_intra = int((counts * (counts - 1) // 2).sum())
    n_inter = b * (b - 1) // 2 - n_intra

    grads = np.zeros_like(probs)
    penalty = 0.0
    d_total = 2.0 * (b * probs - probs.sum(axis=0))
    d_intra = 2.0 * (counts[inv][:, None] * probs - class_sum[inv])
    if n_intra > 0:
        penalty += coeffs.beta * intra_sum / n_intra
        grads += coeffs.beta * d_intra / n_intra
    if n_inter > 0:
        penalty -= coeffs.gamma * inter_sum / n_inter
        grads -= coeffs.gamma * (d_total - d_intra) / n_inter
    return penalty, grads


def adapt_coeffs(coeffs: RegCoeffs, val_acc_prev: float, val_acc_now: float) -> RegCoeffs:
    """Double both coefficients when validation accuracy rose, halve when it fell.

    Unchanged accuracy leaves them alone; results are clamped to the bounds.
    """
    for acc in (val_acc_prev, val_acc_now):
        if not 0.0 <= acc <= 1.0:
            raise ValueError(f"accuracy {acc} outside [0, 1]")
    if val_acc_now > val_acc_prev:
        factor = 2.0
    elif val_acc_now < val_acc_prev:
        factor = 0.5
    else:
        return coeffs
    return replace(
        coeffs,
        beta=float(np.clip(coeffs.beta * factor, coeffs.beta_min, coeffs.beta_max)),
        gamma=float(np.clip(coeffs.gamma * factor, coeffs.gamma_min, coeffs.gamma_max)),
    )
