"""Dense linear algebra kernels: affine maps, activations, Adam, finite differences.

Everything trains in float64. Inputs to :func:`affine` may be dense vectors,
scipy sparse rows, or ``(indices, values)`` pairs; missing indices are zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import NumericError


def as_dense_vector(x, n: int | None = None) -> np.ndarray:
    """Coerce a dense array, sparse row, or (indices, values) pair to a 1-d float64 array."""
    if isinstance(x, tuple):
        idx, vals = x
        idx = np.asarray(idx, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if n is None:
            n = int(idx.max()) + 1 if idx.size else 0
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValueError(f"feature index out of range for dimension {n}")
        out = np.zeros(n, dtype=np.float64)
        out[idx] = vals
        return out
    if sp.issparse(x):
        out = np.asarray(x.todense(), dtype=np.float64).ravel()
    else:
        out = np.asarray(x, dtype=np.float64).ravel()
    if n is not None and out.shape[0] != n:
        raise ValueError(f"expected vector of dimension {n}, got {out.shape[0]}")
    return out


def affine(weights: np.ndarray, bias: np.ndarray, x) -> np.ndarray:
    """Return ``weights @ x + bias``.

    ``x`` may be a dense 1-d vector, a scipy sparse row, or an
    ``(indices, values)`` pair of parallel arrays.
    """
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weights.ndim != 2 or bias.shape != (weights.shape[0],):
        raise ValueError(
            f"bias shape {bias.shape} does not match weights {weights.shape}"
        )
    if isinstance(x, tuple):
        idx, vals = x
        idx = np.asarray(idx, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if idx.size and (idx.min() < 0 or idx.max() >= weights.shape[1]):
            raise ValueError(
                f"feature index out of range for {weights.shape[1]} columns"
            )
        return weights[:, idx] @ vals + bias
    if sp.issparse(x):
        if x.shape[-1] != weights.shape[1]:
            raise ValueError(
                f"input dimension {x.shape[-1]} does not match weights {weights.shape}"
            )
        return np.asarray(x @ weights.T).ravel() + bias
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != weights.shape[1]:
        raise ValueError(
            f"input dimension {x.shape[0]} does not match weights {weights.shape}"
        )
    return weights @ x + bias


def sigmoid(v):
    """Elementwise logistic function, stable for arbitrarily large |v|."""
    v = np.asarray(v, dtype=np.float64)
    z = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def softmax_nll(logits: np.ndarray, y: int) -> tuple[float, np.ndarray]:
    """Softmax probabilities and negative log likelihood of class ``y``.

    Computed with max-shifted exponentials so extreme logits do not overflow.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ValueError("logits must be a vector")
    k = logits.shape[0]
    if not 0 <= y < k:
        raise ValueError(f"class id {y} out of range for {k} classes")
    m = logits.max()
    e = np.exp(logits - m)
    s = e.sum()
    probs = e / s
    loss = float(np.log(s) + m - logits[y])
    return loss, probs


def softmax_batch(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a 2-d logits array."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def nll_batch(logits: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-row negative log likelihood for a 2-d logits array and label vector."""
    m = logits.max(axis=1)
    lse = np.log(np.exp(logits - m[:, None]).sum(axis=1)) + m
    return lse - logits[np.arange(logits.shape[0]), y]


@dataclass
class AdamState:
    """Per-parameter-block Adam accumulators.

    ``name`` labels the block in error messages when a non-finite gradient
    shows up.
    """

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    name: str = "params"

    @classmethod
    def for_params(cls, params: np.ndarray, lr: float = 1e-3, name: str = "params",
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(m=np.zeros_like(params, dtype=np.float64),
                   v=np.zeros_like(params, dtype=np.float64),
                   t=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps, name=name)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """One bias-corrected Adam update; mutates ``state``, returns new params."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.shape:
        raise ValueError(
            f"gradient shape {grads.shape} does not match params {params.shape} ({state.name})"
        )
    if not np.all(np.isfinite(grads)):
        raise NumericError(f"non-finite gradient for parameter block '{state.name}'")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * (grads * grads)
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray,
                     h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    xf = x.copy().ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        fp = f(xf.reshape(x.shape))
        xf[i] = orig - h
        fm = f(xf.reshape(x.shape))
        xf[i] = orig
        flat[i] = (fp - fm) / (2.0 * h)
    return grad
