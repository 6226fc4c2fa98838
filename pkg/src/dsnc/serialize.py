"""Binary container for trained models, shared by all three model kinds.

Layout (all little-endian): 4 magic bytes ("DSNC", "MLP1", or "ECOC"), a
1-byte format version, uint32 n, c, K, then the parameter blocks as float32:
encoder weights row-major, encoder bias, decoder weights row-major, decoder
bias. The ECOC container stores its per-bit classifier (c x n weights and c
biases) followed by the packed code-matrix rows (K x ceil(c/64) uint64
words) instead of decoder blocks. A code index may be appended as an
optional section: tag byte 0x01, uint32 entry count, then per entry the
packed code words, uint32 class id, and uint32 occurrence count. The reader
validates magic, version, and total length.
"""

from __future__ import annotations

import struct

import numpy as np

from .baselines import EcocModel, MlpModel
from .codes import words_per_code
from .errors import DataError
from .hamming import CodeIndex
from .model import DsncModel

MAGIC_BY_KIND = {"dsnc": b"DSNC", "mlp": b"MLP1", "ecoc": b"ECOC"}
FORMAT_VERSION = 1
INDEX_TAG = 0x01


def _f32(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def save_model(model, path, index: CodeIndex | None = None) -> None:
    """Write a model (and optionally its code index) to ``path``."""
    magic = MAGIC_BY_KIND.get(model.kind)
    if magic is None:
        raise ValueError(f"cannot serialize model kind {model.kind!r}")
    parts = [magic, struct.pack("<B", FORMAT_VERSION),
             struct.pack("<III", model.input_dim, model.code_size, model.n_classes)]
    if model.kind == "ecoc":
        parts += [_f32(model.w), _f32(model.b),
                  np.ascontiguousarray(model.packed_rows(), dtype="<u8").tobytes()]
        if index is not None:
            raise ValueError("code index sections only apply to code models")
    else:
        parts += [_f32(model.w_enc), _f32(model.b_enc),
                  _f32(model.w_dec), _f32(model.b_dec)]
        if index is not None:
            if index.c != model.code_size:
                raise ValueError("index code length does not match the model")
            parts += [struct.pack("<BI", INDEX_TAG, len(index))]
            w = words_per_code(index.c)
            entry = np.zeros(len(index),
                             dtype=np.dtype([("words", "<u8", (w,)),
                                             ("label", "<u4"), ("count", "<u4")]))
            entry["words"] = index.words
            entry["label"] = index.labels
            entry["count"] = index.counts
            parts.append(entry.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.off = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.off + size > len(self.buf):
            raise DataError(f"{self.path}: corrupt model file (truncated)")
        out = self.buf[self.off:self.off + size]
        self.off += size
        return out

    def array(self, dtype, count: int, shape) -> np.ndarray:
        raw = self.take(count * np.dtype(dtype).itemsize)
        return np.frombuffer(raw, dtype=dtype, count=count).astype(np.float64).reshape(shape)

    def done(self) -> bool:
        return self.off == len(self.buf)


def load_model(path):
    """Read a model file; returns (model, index or None)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    r = _Reader(buf, path)
    magic = r.take(4)
    kinds = {v: k for k, v in MAGIC_BY_KIND.items()}
    kind = kinds.get(magic)
    if kind is None:
        raise DataError(f"{path}: unrecognized model format")
    (version,) = struct.unpack("<B", r.take(1))
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    n, c, k = struct.unpack("<III", r.take(12))
    if kind == "ecoc":
        w = r.array("<f4", c * n, (c, n))
        b = r.array("<f4", c, (c,))
        wpc = words_per_code(c)
        raw = r.take(k * wpc * 8)
        rows = np.frombuffer(raw, dtype="<u8").reshape(k, wpc)
        from .codes import unpack_bits_many

        model = EcocModel(code_matrix=unpack_bits_many(rows, c), w=w, b=b)
        index = None
    else:
        cls = DsncModel if kind == "dsnc" else MlpModel
        model = cls(
            w_enc=r.array("<f4", c * n, (c, n)),
            b_enc=r.array("<f4", c, (c,)),
            w_dec=r.array("<f4", k * c, (k, c)),
            b_dec=r.array("<f4", k, (k,)),
        )
        index = None
        if not r.done():
            (tag,) = struct.unpack("<B", r.take(1))
            if tag != INDEX_TAG:
                raise DataError(f"{path}: unknown section tag {tag:#x}")
            (entries,) = struct.unpack("<I", r.take(4))
            w = words_per_code(c)
            dtype = np.dtype([("words", "<u8", (w,)), ("label", "<u4"), ("count", "<u4")])
            raw = r.take(entries * dtype.itemsize)
            rec = np.frombuffer(raw, dtype=dtype)
            index = CodeIndex(
                c=c,
                words=rec["words"].astype(np.uint64).reshape(entries, w),
                labels=rec["label"].astype(np.int64),
                counts=rec["count"].astype(np.int64),
            )
    if not r.done():
        raise DataError(f"{path}: corrupt model file (trailing bytes)")
    return model, index
