"""The stochastic-code network: encoder, Bernoulli code layer, training decoder.

An input is mapped to per-bit Bernoulli parameters by a linear layer plus
sigmoid, a binary code is sampled (or thresholded at inference), and a
linear-softmax decoder maps the code to a class. Gradients flow back either
through the straight-through estimator or the score-function (REINFORCE)
estimator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .codes import BinaryCode
from .linalg import affine, as_dense_vector, sigmoid, softmax_nll

PROB_CLAMP = 1e-12


@dataclass
class DsncModel:
    """Encoder (w_enc, b_enc) and decoder (w_dec, b_dec) parameters."""

    w_enc: np.ndarray  # (c, n)
    b_enc: np.ndarray  # (c,)
    w_dec: np.ndarray  # (K, c)
    b_dec: np.ndarray  # (K,)

    kind: ClassVar[str] = "dsnc"

    def __post_init__(self):
        c, n = self.w_enc.shape
        k = self.w_dec.shape[0]
        if self.b_enc.shape != (c,) or self.w_dec.shape != (k, c) or self.b_dec.shape != (k,):
            raise ValueError("inconsistent parameter shapes")
        for name, arr in self.param_blocks():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in {name}")

    @property
    def input_dim(self) -> int:
        return self.w_enc.shape[1]

    @property
    def code_size(self) -> int:
        return self.w_enc.shape[0]

    @property
    def n_classes(self) -> int:
        return self.w_dec.shape[0]

    def param_blocks(self):
        return [("enc.w", self.w_enc), ("enc.b", self.b_enc),
                ("dec.w", self.w_dec), ("dec.b", self.b_dec)]

    def copy(self) -> "DsncModel":
        return type(self)(self.w_enc.copy(), self.b_enc.copy(),
                          self.w_dec.copy(), self.b_dec.copy())


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def init_model(n: int, c: int, k: int, seed: int = 0, cls=DsncModel):
    """Fresh model with symmetric uniform weight init and zero biases."""
    if n < 1 or c < 1 or k < 2:
        raise ValueError("need n >= 1, c >= 1, K >= 2")
    rng = np.random.default_rng([int(seed), 0])
    return cls(
        w_enc=_glorot(rng, c, n),
        b_enc=np.zeros(c),
        w_dec=_glorot(rng, k, c),
        b_dec=np.zeros(k),
    )


def encode_probs(model, x) -> tuple[np.ndarray, np.ndarray]:
    """Per-bit Bernoulli parameters for one input; returns (probs, pre-activation)."""
    a = affine(model.w_enc, model.b_enc, x)
    return sigmoid(a), a


def encode_probs_batch(model, x_matrix) -> tuple[np.ndarray, np.ndarray]:
    """Batched :func:`encode_probs` over the rows of a dense or sparse matrix."""
    a = np.asarray(x_matrix @ model.w_enc.T) + model.b_enc
    return sigmoid(a), a


def sample_code(probs: np.ndarray, rng: np.random.Generator) -> BinaryCode:
    """Draw one code: bit i is 1 with probability probs[i], independently."""
    u = rng.random(len(probs))
    return BinaryCode.from_bits(u < probs)


def threshold_code(probs: np.ndarray) -> BinaryCode:
    """Most probable value per bit; ties at 0.5 map to 1."""
    return BinaryCode.from_bits(np.asarray(probs) >= 0.5)


def threshold_bits(probs: np.ndarray) -> np.ndarray:
    """Batched thresholding: (N, c) probabilities to (N, c) uint8 bits."""
    return (np.asarray(probs) >= 0.5).astype(np.uint8)


def code_log_prob(probs: np.ndarray, code: BinaryCode) -> float:
    """log P(code | probs) under the independent-Bernoulli model.

    Probabilities are clamped to [1e-12, 1 - 1e-12] inside the logs so
    degenerate bits stay finite.
    """
    bits = code.bits().astype(np.float64)
    p = np.clip(np.asarray(probs, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.sum(bits * np.log(p) + (1.0 - bits) * np.log1p(-p)))


@dataclass
class DecodeResult:
    loss: float
    probs: np.ndarray      # (K,) class probabilities
    grad_w_dec: np.ndarray
    grad_b_dec: np.ndarray
    grad_code: np.ndarray  # gradient wrt the (relaxed) code vector


def decode_train(model, code: BinaryCode, y: int) -> DecodeResult:
    """Linear-softmax decode of one code with NLL loss and analytic gradients."""
    if code.c != model.code_size:
        raise ValueError(f"code length {code.c} does not match model c={model.code_size}")
    bits = code.bits().astype(np.float64)
    logits = model.w_dec @ bits + model.b_dec
    loss, probs = softmax_nll(logits, y)
    g = probs.copy()
    g[y] -= 1.0
    return DecodeResult(
        loss=loss,
        probs=probs,
        grad_w_dec=np.outer(g, bits),
        grad_b_dec=g,
        grad_code=model.w_dec.T @ g,
    )


@dataclass
class ForwardTrace:
    """Intermediates of a single stochastic forward pass, kept for backward."""

    x: object
    pre: np.ndarray       # encoder pre-activation a
    probs: np.ndarray     # sigmoid(a)
    code: BinaryCode
    logits: np.ndarray
    loss: float


def forward(model, x, y: int, rng: np.random.Generator | None = None) -> ForwardTrace:
    """One forward pass; samples the code when ``rng`` is given, thresholds otherwise."""
    probs, a = encode_probs(model, x)
    code = sample_code(probs, rng) if rng is not None else threshold_code(probs)
    bits = code.bits().astype(np.float64)
    logits = model.w_dec @ bits + model.b_dec
    loss, _ = softmax_nll(logits, y)
    return ForwardTrace(x=x, pre=a, probs=probs, code=code, logits=logits, loss=loss)


def ste_backward(grad_code: np.ndarray, trace: ForwardTrace) -> tuple[np.ndarray, np.ndarray]:
    """Straight-through encoder gradients.

    The sampling step is treated as the identity, so ``grad_code`` passes
    through to the probabilities unchanged and is then chained through the
    sigmoid: returns (grad wrt w_enc, grad wrt b_enc).
    """
    grad_probs = np.asarray(grad_code, dtype=np.float64)
    grad_a = grad_probs * trace.probs * (1.0 - trace.probs)
    x = as_dense_vector(trace.x)
    return np.outer(grad_a, x), grad_a


def reinforce_gradient(model, x, y: int, n_samples: int, rng: np.random.Generator,
                       baseline: bool = False) -> tuple[np.ndarray, np.ndarray, float]:
    """Score-function estimate of the encoder gradient from Monte-Carlo code samples.

    For each of ``n_samples`` codes b ~ Bernoulli(probs), weights the score
    of the sampled code by the decoder loss. With ``baseline`` and at least
    two samples, each sample's weight subtracts the mean loss of the other
    samples (leave-one-out, which keeps the estimator unbiased). Returns
    (grad wrt w_enc, grad wrt b_enc, mean loss).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    probs, _ = encode_probs(model, x)
    c = probs.shape[0]
    bits = np.empty((n_samples, c), dtype=np.float64)
    losses = np.empty(n_samples)
    for m in range(n_samples):
        u = rng.random(c)
        bits[m] = u < probs
        logits = model.w_dec @ bits[m] + model.b_dec
        losses[m], _ = softmax_nll(logits, y)
    weights = losses.copy()
    if baseline and n_samples > 1:
        loo = (losses.sum() - losses) / (n_samples - 1)
        weights -= loo
    # d/da log P(b|x) = b - sigmoid(a); finite even for saturated probabilities
    grad_a = ((bits - probs) * weights[:, None]).mean(axis=0)
    x_dense = as_dense_vector(x, model.input_dim)
    return np.outer(grad_a, x_dense), grad_a, float(losses.mean())
