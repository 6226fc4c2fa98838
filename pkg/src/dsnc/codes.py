"""Bit-packed binary codes.

Bit i of a code lives in word ``i // 64`` at position ``i % 64``; bits past
the code length are zero. Interpreted as an unsigned integer, bit i has
weight ``2**i`` (so the highest word is the most significant), which is the
total order used to break nearest-neighbor ties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WORD_BITS = 64


def words_per_code(c: int) -> int:
    return (c + WORD_BITS - 1) // WORD_BITS


def pack_bits(bits) -> np.ndarray:
    """Pack a 0/1 vector into little-endian uint64 words."""
    bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
    return pack_bits_many(bits)[0]


def pack_bits_many(bits: np.ndarray) -> np.ndarray:
    """Pack an (N, c) 0/1 array into an (N, words) uint64 array."""
    bits = np.asarray(bits, dtype=np.uint8)
    n, c = bits.shape
    w = words_per_code(c)
    packed = np.packbits(bits, axis=1, bitorder="little")
    buf = np.zeros((n, w * 8), dtype=np.uint8)
    buf[:, : packed.shape[1]] = packed
    return buf.view("<u8")


def unpack_bits(words: np.ndarray, c: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns a (c,) uint8 array."""
    return unpack_bits_many(words.reshape(1, -1), c)[0]


def unpack_bits_many(words: np.ndarray, c: int) -> np.ndarray:
    """Unpack an (N, words) uint64 array into an (N, c) uint8 array."""
    words = np.ascontiguousarray(words, dtype="<u8")
    buf = words.view(np.uint8)
    return np.unpackbits(buf, axis=1, bitorder="little", count=c)


def popcount(words: np.ndarray) -> np.ndarray:
    """Per-word population count (uint64 in, same-shape counts out)."""
    return np.bitwise_count(words)


def hamming_many(words: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Hamming distances from each row of an (N, words) array to one packed code."""
    return popcount(words ^ query[None, :]).sum(axis=1, dtype=np.int64)


def code_int(words: np.ndarray) -> int:
    """Unsigned integer value of a packed code (bit i has weight 2**i)."""
    return int.from_bytes(np.ascontiguousarray(words, dtype="<u8").tobytes(), "little")


def int_to_words(value: int, c: int) -> np.ndarray:
    if value < 0 or value >= (1 << c):
        raise ValueError(f"value {value} does not fit in {c} bits")
    w = words_per_code(c)
    raw = value.to_bytes(w * 8, "little")
    return np.frombuffer(raw, dtype="<u8").copy()


@dataclass(frozen=True, eq=False)
class BinaryCode:
    """A fixed-length binary code stored as packed uint64 words."""

    c: int
    words: np.ndarray

    def __post_init__(self):
        if self.c < 1:
            raise ValueError("code length must be >= 1")
        w = words_per_code(self.c)
        if self.words.shape != (w,) or self.words.dtype != np.uint64:
            raise ValueError(f"expected {w} uint64 words for c={self.c}")
        tail = self.c % WORD_BITS
        if tail and (int(self.words[-1]) >> tail) != 0:
            raise ValueError("bits beyond the code length must be zero")

    @classmethod
    def from_bits(cls, bits) -> "BinaryCode":
        bits = np.asarray(bits, dtype=np.uint8).ravel()
        return cls(c=bits.shape[0], words=pack_bits(bits))

    @classmethod
    def from_int(cls, value: int, c: int) -> "BinaryCode":
        return cls(c=c, words=int_to_words(value, c))

    def bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.c)

    def value(self) -> int:
        return code_int(self.words)

    def __eq__(self, other) -> bool:
        return (isinstance(other, BinaryCode) and self.c == other.c
                and np.array_equal(self.words, other.words))

    def __hash__(self) -> int:
        return hash((self.c, self.words.tobytes()))

    def __repr__(self) -> str:
        shown = "".join(str(b) for b in self.bits()[:64])
        if self.c > 64:
            shown += "..."
        return f"BinaryCode(c={self.c}, bits={shown})"
