"""Decoding stack over the code space.

Three ways to turn a code into a class: exact brute-force nearest neighbor
over the deduplicated training codes, exact multi-index hashing (substring
tables probed at increasing radius until a pigeonhole bound certifies the
result), and exhaustive 2^c table lookup for small codes.

All tie-breaking is deterministic: equal nearest-neighbor distances resolve
to the smallest code under the unsigned-integer interpretation of the packed
bits, and majority-label ties resolve to the smallest class id.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .codes import (BinaryCode, code_int, hamming_many, pack_bits_many,
                    unpack_bits_many, words_per_code)
from .errors import DataError
from .model import encode_probs_batch, threshold_bits

TABLE_LIMIT = 24


def hamming_distance(a: BinaryCode, b: BinaryCode) -> int:
    """Number of differing bits (popcount of XOR over the packed words)."""
    if a.c != b.c:
        raise ValueError(f"code lengths differ: {a.c} vs {b.c}")
    return int(np.bitwise_count(a.words ^ b.words).sum())


@dataclass
class CodeIndex:
    """Deduplicated training codes with majority labels and occurrence counts."""

    c: int
    words: np.ndarray   # (U, W) uint64, unique, lexicographically sorted
    labels: np.ndarray  # (U,) int64 majority label per code
    counts: np.ndarray  # (U,) int64 examples that produced each code

    def __len__(self) -> int:
        return self.words.shape[0]

    @property
    def total_examples(self) -> int:
        return int(self.counts.sum())


def build_index_from_codes(words: np.ndarray, labels: np.ndarray, c: int) -> CodeIndex:
    """Dedup packed codes; each unique code gets the most frequent label.

    Majority ties go to the smallest class id. The stored order is the
    lexicographic order of the packed words, so the index is independent of
    input order.
    """
    words = np.ascontiguousarray(words, dtype=np.uint64)
    labels = np.asarray(labels, dtype=np.int64)
    if words.shape[0] == 0:
        raise DataError("cannot index an empty code set")
    uniq, inverse = np.unique(words, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    u = uniq.shape[0]
    counts = np.bincount(inverse, minlength=u).astype(np.int64)
    order = np.argsort(inverse, kind="stable")
    bounds = np.concatenate([np.searchsorted(inverse[order], np.arange(u)), [len(order)]])
    majority = np.empty(u, dtype=np.int64)
    sorted_labels = labels[order]
    for i in range(u):
        group = sorted_labels[bounds[i]:bounds[i + 1]]
        majority[i] = np.bincount(group).argmax()  # argmax ties -> smallest id
    return CodeIndex(c=c, words=uniq, labels=majority, counts=counts)


def build_index(model, dataset) -> CodeIndex:
    """Index the threshold codes of every example in ``dataset``.

    Deterministic threshold codes (not samples) keep the index reproducible
    and match what inference-time encoding produces.
    """
    if len(dataset) == 0:
        raise DataError("cannot build an index from an empty dataset")
    probs, _ = encode_probs_batch(model, dataset.x)
    words = pack_bits_many(threshold_bits(probs))
    return build_index_from_codes(words, dataset.y, model.code_size)


def _min_by_code_value(words: np.ndarray, ids: np.ndarray) -> int:
    best = ids[0]
    best_key = code_int(words[best])
    for i in ids[1:]:
        key = code_int(words[i])
        if key < best_key:
            best, best_key = i, key
    return int(best)


def nn_decode(index: CodeIndex, query: BinaryCode) -> tuple[int, int]:
    """Exact nearest neighbor by full scan; returns (class, distance)."""
    if len(index) == 0:
        raise DataError("empty code index")
    if query.c != index.c:
        raise ValueError(f"query length {query.c} does not match index c={index.c}")
    dists = hamming_many(index.words, query.words)
    dmin = int(dists.min())
    cands = np.flatnonzero(dists == dmin)
    best = cands[0] if len(cands) == 1 else _min_by_code_value(index.words, cands)
    return int(index.labels[best]), dmin


@dataclass
class MihIndex:
    """Multi-index hashing tables over disjoint code substrings.

    Substring j covers bits [starts[j], starts[j] + lengths[j]); every
    indexed code appears in each of the m tables. Per table the observed
    substring values are kept sorted with an offsets array into a
    concatenated code-id list, so probing is a binary search.
    """

    c: int
    m: int
    starts: np.ndarray
    lengths: np.ndarray
    sub_values: list[np.ndarray]  # per table: sorted unique substring values
    offsets: list[np.ndarray]     # per table: (len(values)+1,) slice bounds
    ids: list[np.ndarray]         # per table: code ids grouped by value


def default_substring_count(c: int, k: int) -> int:
    """Heuristic table count: about one table per log2(k) code bits."""
    m = int(c / np.log2(max(k, 2)))
    return max(1, min(m, c))


def _substring_values(bits: np.ndarray, start: int, length: int) -> np.ndarray:
    powers = (np.uint64(1) << np.arange(length, dtype=np.uint64))
    return bits[:, start:start + length].astype(np.uint64) @ powers


def build_mih(index: CodeIndex, m: int | None = None) -> MihIndex:
    """Build substring tables over the codes of ``index``.

    Substrings have length ceil(c/m); the last may be shorter. ``m``
    defaults to :func:`default_substring_count` using the total number of
    indexed examples.
    """
    c = index.c
    if m is None:
        m = default_substring_count(c, index.total_examples)
    if not 1 <= m <= c:
        raise ValueError(f"substring count {m} out of range for c={c}")
    length = -(-c // m)
    starts, lengths = [], []
    pos = 0
    for _ in range(m):
        starts.append(pos)
        lengths.append(min(length, c - pos))
        pos += lengths[-1]
    if lengths[-1] == 0:
        raise ValueError(f"substring count {m} leaves an empty substring for c={c}")
    bits = unpack_bits_many(index.words, c)
    sub_values, offsets, ids = [], [], []
    for start, ln in zip(starts, lengths):
        vals = _substring_values(bits, start, ln)
        order = np.argsort(vals, kind="stable")
        sorted_vals = vals[order]
        uniq, first = np.unique(sorted_vals, return_index=True)
        sub_values.append(uniq)
        offsets.append(np.concatenate([first, [len(order)]]))
        ids.append(order.astype(np.int64))
    return MihIndex(c=c, m=m, starts=np.asarray(starts), lengths=np.asarray(lengths),
                    sub_values=sub_values, offsets=offsets, ids=ids)


_FLIP_MASKS: dict[tuple[int, int], np.ndarray] = {}


def _flip_masks(length: int, radius: int) -> np.ndarray:
    """All XOR masks of the given popcount over ``length`` bits."""
    key = (length, radius)
    cached = _FLIP_MASKS.get(key)
    if cached is None:
        masks = [sum(1 << p for p in combo)
                 for combo in combinations(range(length), radius)]
        cached = _FLIP_MASKS[key] = np.asarray(masks, dtype=np.uint64)
    return cached


def mih_query(mih: MihIndex, index: CodeIndex,
              query: BinaryCode) -> tuple[int, int, int]:
    """Exact nearest neighbor via multi-index probing.

    Probes each table at substring radius r = 0, 1, ... and stops once the
    pigeonhole bound certifies completeness: a code at Hamming distance d
    agrees with the query on some substring within radius floor(d/m), so
    after finishing radius r every code at distance <= m*(r+1) - 1 has been
    seen. Stopping at r >= floor(best/m) therefore guarantees that all codes
    at distance <= best were examined, which also makes the smallest-code
    tie-break identical to the full scan's.

    Returns (class, distance, candidates examined).
    """
    if query.c != mih.c or index.c != mih.c:
        raise ValueError("query, index, and tables must share the code length")
    u = len(index)
    if u == 0:
        raise DataError("empty code index")
    qbits = query.bits().reshape(1, -1)
    qsubs = [int(_substring_values(qbits, int(s), int(ln))[0])
             for s, ln in zip(mih.starts, mih.lengths)]
    seen = np.zeros(u, dtype=bool)
    best_id = -1
    best_dist = -1
    best_key = 0
    examined = 0
    max_radius = int(mih.lengths.max())
    for radius in range(max_radius + 1):
        for j in range(mih.m):
            if radius > int(mih.lengths[j]):
                continue
            probes = np.uint64(qsubs[j]) ^ _flip_masks(int(mih.lengths[j]), radius)
            table_vals = mih.sub_values[j]
            pos = np.searchsorted(table_vals, probes)
            inside = pos < len(table_vals)
            hit_pos = pos[inside]
            hit_pos = hit_pos[table_vals[hit_pos] == probes[inside]]
            if len(hit_pos) == 0:
                continue
            off = mih.offsets[j]
            starts = off[hit_pos]
            lengths = off[hit_pos + 1] - starts
            # ragged gather of all id ranges without a per-hit Python loop
            shift = np.concatenate(([0], np.cumsum(lengths)[:-1]))
            flat = np.repeat(starts - shift, lengths) + np.arange(int(lengths.sum()))
            cand = mih.ids[j][flat]
            cand = cand[~seen[cand]]
            if len(cand) == 0:
                continue
            seen[cand] = True
            examined += len(cand)
            dists = hamming_many(index.words[cand], query.words)
            i = int(np.argmin(dists))
            d = int(dists[i])
            ties = cand[np.flatnonzero(dists == d)]
            cand_id = int(ties[0]) if len(ties) == 1 else _min_by_code_value(index.words, ties)
            cand_key = code_int(index.words[cand_id])
            if best_id < 0 or d < best_dist or (d == best_dist and cand_key < best_key):
                best_id, best_dist, best_key = cand_id, d, cand_key
        if best_id >= 0 and radius >= best_dist // mih.m:
            break
    return int(index.labels[best_id]), best_dist, examined


def _over_chunks(fn, n_items: int, threads: int):
    """Apply ``fn(lo, hi)`` over ranges covering 0..n_items, optionally threaded.

    Chunks are fixed ranges and results land in preallocated arrays, so the
    outcome is identical for any thread count.
    """
    if threads <= 1 or n_items < 2:
        fn(0, n_items)
        return
    from concurrent.futures import ThreadPoolExecutor

    step = -(-n_items // threads)
    ranges = [(lo, min(lo + step, n_items)) for lo in range(0, n_items, step)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(lambda r: fn(*r), ranges))


def nn_decode_many(index: CodeIndex, words: np.ndarray,
                   threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force :func:`nn_decode` for each packed query row."""
    n = words.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.int64)

    def run(lo, hi):
        for i in range(lo, hi):
            q = BinaryCode(c=index.c, words=np.ascontiguousarray(words[i]))
            labels[i], dists[i] = nn_decode(index, q)

    _over_chunks(run, n, threads)
    return labels, dists


def mih_query_many(mih: MihIndex, index: CodeIndex, words: np.ndarray,
                   threads: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """:func:`mih_query` for each packed query row; also returns candidate counts."""
    n = words.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.int64)
    cands = np.empty(n, dtype=np.int64)

    def run(lo, hi):
        for i in range(lo, hi):
            q = BinaryCode(c=index.c, words=np.ascontiguousarray(words[i]))
            labels[i], dists[i], cands[i] = mih_query(mih, index, q)

    _over_chunks(run, n, threads)
    return labels, dists, cands


@dataclass
class CodeTable:
    """Exhaustive code-to-class lookup; entry i decodes the code with value i."""

    c: int
    classes: np.ndarray  # (2**c,) int32


def enumerate_table(model, chunk: int = 1 << 16) -> CodeTable:
    """Linear-decode every code in {0,1}^c into a lookup table.

    Constant-time decoding afterwards, at the price of 2^c entries; refused
    beyond c = 24.
    """
    c = model.code_size
    if c > TABLE_LIMIT:
        raise DataError(f"code size exceeds table limit ({c} > {TABLE_LIMIT})")
    size = 1 << c
    classes = np.empty(size, dtype=np.int32)
    shifts = np.arange(c, dtype=np.uint64)
    for lo in range(0, size, chunk):
        hi = min(lo + chunk, size)
        vals = np.arange(lo, hi, dtype=np.uint64)
        bits = ((vals[:, None] >> shifts) & np.uint64(1)).astype(np.float64)
        logits = bits @ model.w_dec.T + model.b_dec
        classes[lo:hi] = logits.argmax(axis=1)  # argmax ties -> smallest class id
    return CodeTable(c=c, classes=classes)


def table_decode(table: CodeTable, query: BinaryCode) -> int:
    if query.c != table.c:
        raise ValueError(f"query length {query.c} does not match table c={table.c}")
    return int(table.classes[query.value()])
