"""Decoders: packed minimum-distance search, matched filter, majority vote, hybrid.

Every decoder maps received codewords ``(N, T)`` to projector columns
``(N,)``; ``FAILED`` (-1) marks a pixel the decoder refuses to label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from . import gf2_bch
from .codebook import (
    Codebook,
    CodebookError,
    bits_to_int,
    gray_inverse,
    hybrid_params_of,
    hybrid_segment_book,
    shift_phase,
)

FAILED = -1


# ---- bit packing ---------------------------------------------------------------


def pack_bits(bits) -> np.ndarray:
    """``(N, T)`` bits -> ``(N, ceil(T/64))`` uint64; bit t sits in word t//64 at position t%64."""
    b = np.ascontiguousarray(bits, dtype=np.uint8)
    if b.ndim == 1:
        b = b[None]
    return _k.pack_rows(b, max(1, -(-b.shape[1] // 64)))


def unpack_bits(words, T: int) -> np.ndarray:
    w = np.ascontiguousarray(words, dtype="<u8")
    N, W = w.shape
    by = w.view(np.uint8).reshape(N, W * 8)
    return np.unpackbits(by, axis=1, bitorder="little")[:, :T].copy()


@dataclass(frozen=True, eq=False)
class PackedCodebook:
    """Bit-packed codewords with their column indices.

    ``min_distance`` is the exact minimum pairwise distance; queries within
    ``(min_distance - 1) // 2`` of an entry stop the scan early, which cannot
    change the answer.
    """

    words: np.ndarray
    T: int
    columns: np.ndarray
    min_distance: int
    words_t: np.ndarray = None

    def __post_init__(self):
        if self.words_t is None:
            wt = np.ascontiguousarray(self.words.T)
            wt.setflags(write=False)
            object.__setattr__(self, "words_t", wt)

    @property
    def radius(self) -> int:
        return max((self.min_distance - 1) // 2, -1)

    def unpack(self) -> np.ndarray:
        return unpack_bits(self.words, self.T)


def pack_codebook(book: Codebook | np.ndarray) -> PackedCodebook:
    table = book.table if isinstance(book, Codebook) else np.asarray(book, dtype=np.uint8)
    words = pack_bits(table)
    words.setflags(write=False)
    C = table.shape[0]
    dmin = int(_k.min_pairwise(words)) if C > 1 else table.shape[1] + 1
    cols = np.arange(C, dtype=np.int64)
    cols.setflags(write=False)
    return PackedCodebook(words=words, T=table.shape[1], columns=cols, min_distance=dmin)


@dataclass
class DecodeResult:
    columns: np.ndarray
    distances: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, DecodeResult)
            and np.array_equal(self.columns, other.columns)
            and np.array_equal(self.distances, other.distances)
        )


def _as_queries(queries, T: int) -> np.ndarray:
    q = np.asarray(queries, dtype=np.uint8)
    if q.ndim == 1:
        q = q[None]
    if q.shape[1] != T:
        raise ValueError(f"queries must have {T} bits, got {q.shape[1]}")
    return q


def mdd_decode_packed(qwords: np.ndarray, book: PackedCodebook) -> DecodeResult:
    q = np.ascontiguousarray(qwords, dtype=np.uint64)
    N = q.shape[0]
    idx = np.empty(N, np.int64)
    dist = np.empty(N, np.int64)
    if N:
        _k.mdd(q, book.words, book.words_t, book.radius, idx, dist)
    return DecodeResult(columns=book.columns[idx], distances=dist)


def mdd_decode_batch(queries, book: PackedCodebook) -> DecodeResult:
    """Nearest codeword by Hamming distance; ties go to the lowest column."""
    q = _as_queries(queries, book.T)
    return mdd_decode_packed(pack_bits(q), book)


def naive_mdd(queries, book: Codebook, chunk: int = 64) -> DecodeResult:
    """Reference decoder comparing bit by bit, no packing."""
    q = _as_queries(queries, book.T)
    table = book.table
    cols = np.empty(q.shape[0], np.int64)
    dist = np.empty(q.shape[0], np.int64)
    for s in range(0, q.shape[0], chunk):
        d = (q[s:s + chunk, None, :] != table[None, :, :]).sum(axis=2)
        cols[s:s + chunk] = d.argmin(axis=1)
        dist[s:s + chunk] = d.min(axis=1)
    return DecodeResult(columns=cols, distances=dist)


# ---- binary shift ----------------------------------------------------------------


def matched_filter_batch(seqs, l_shift: int, offsets=0) -> np.ndarray:
    """Best shift v in [0, 2^l_shift) for bursts expected at phase ``offset + v``.

    The score of a phase is the +1/-1 correlation of the received bits with
    the burst's ON window; ties go to the smallest v.
    """
    half = 1 << l_shift
    s = np.ascontiguousarray(seqs, dtype=np.uint8)
    if s.ndim == 1:
        s = s[None]
    if s.shape[1] != 2 * half:
        raise ValueError(f"sequence must have {2 * half} bits, got {s.shape[1]}")
    off = np.ascontiguousarray(np.broadcast_to(np.asarray(offsets, dtype=np.int64), (s.shape[0],)))
    out = np.empty(s.shape[0], np.int64)
    _k.matched_filter(s, half, off % (2 * half), out)
    return out


def matched_filter_decode(sequence, l_shift: int, offset: int = 0) -> int:
    return int(matched_filter_batch(np.asarray(sequence)[None], l_shift, offset)[0])


# ---- majority vote -------------------------------------------------------------


def majority_vote_batch(received, L: int, r: int) -> np.ndarray:
    """Per-bit votes over r blocks; tied positions come back as -1."""
    x = np.asarray(received, dtype=np.uint8)
    if x.ndim == 1:
        x = x[None]
    if x.shape[1] != r * L:
        raise ValueError(f"expected {r * L} bits for r={r}, L={L}, got {x.shape[1]}")
    ones = x.reshape(x.shape[0], r, L).sum(axis=1, dtype=np.int64)
    out = (2 * ones > r).astype(np.int8)
    out[2 * ones == r] = -1
    return out


def majority_vote_decode(sequence, L: int, r: int) -> np.ndarray:
    """Majority vote of one received sequence; a tied bit is returned as -1.

    A tie is unresolvable, so it is treated as a decoding error whatever the
    transmitted bit was.
    """
    return majority_vote_batch(np.asarray(sequence)[None], L, r)[0]


# ---- decoders bound to a codebook ----------------------------------------------


class Decoder:
    name = "base"

    def __init__(self, book: Codebook):
        self.book = book

    def decode(self, received, rng=None) -> np.ndarray:
        raise NotImplementedError

    @property
    def can_fail(self) -> bool:
        return False

    @property
    def uses_rng(self) -> bool:
        """True when ``decode`` draws from ``rng`` (randomized tie breaking)."""
        return False


def _message_lookup(book: Codebook) -> np.ndarray:
    L = int(book.meta["L"])
    lut = np.full(1 << L, FAILED, dtype=np.int64)
    lut[bits_to_int(book.messages)] = np.arange(book.num_columns)
    return lut


class GrayDecoder(Decoder):
    """Read the message straight off the frames (no redundancy)."""

    name = "direct"

    def __init__(self, book: Codebook):
        if book.strategy not in ("gray", "longrun"):
            raise CodebookError(f"direct decoding does not apply to {book.strategy}")
        super().__init__(book)
        self.L = int(book.meta["L"])
        self.lut = _message_lookup(book)

    @property
    def can_fail(self):
        return self.book.num_columns < (1 << self.L)

    def decode(self, received, rng=None):
        x = np.asarray(received, dtype=np.uint8)
        if x.ndim != 2 or x.shape[1] < self.L:
            raise ValueError(f"expected (N, >= {self.L}) received bits")
        msg = np.empty(x.shape[0], np.int64)
        _k.rows_to_int(x, self.L, msg)
        return self.lut[msg]


class RepetitionDecoder(Decoder):
    """Majority vote, then message lookup.

    ``tie="error"`` fails the pixel on any tied bit; ``tie="random"`` settles
    it with a fair coin from ``rng``.
    """

    name = "vote"

    def __init__(self, book: Codebook, tie: str = "error"):
        if book.strategy != "repetition":
            raise CodebookError("majority voting needs a repetition codebook")
        if tie not in ("error", "random"):
            raise ValueError("tie must be 'error' or 'random'")
        super().__init__(book)
        self.L = int(book.meta["L"])
        self.r = int(book.meta["r"])
        self.tie = tie
        self.lut = _message_lookup(book)

    @property
    def can_fail(self):
        return self.tie == "error" or self.book.num_columns < (1 << self.L)

    @property
    def uses_rng(self):
        return self.tie == "random"

    def decode(self, received, rng=None):
        x = np.ascontiguousarray(received, dtype=np.uint8)
        if x.ndim != 2 or x.shape[1] != self.r * self.L:
            raise ValueError(f"expected (N, {self.r * self.L}) received bits")
        msg = np.empty(x.shape[0], np.int64)
        tied = np.empty(x.shape[0], np.int64)
        _k.vote(x, self.L, self.r, msg, tied)
        if self.tie == "random":
            if rng is None:
                raise ValueError("random tie breaking needs an rng")
            coins = rng.integers(0, 1 << self.L, size=msg.shape, dtype=np.int64)
            return self.lut[msg | (tied & coins)]
        cols = self.lut[msg]
        cols[tied != 0] = FAILED
        return cols


class MddDecoder(Decoder):
    name = "mdd"

    def __init__(self, book: Codebook):
        super().__init__(book)
        self.packed = pack_codebook(book)

    def decode(self, received, rng=None):
        return mdd_decode_batch(received, self.packed).columns


class BddDecoder(Decoder):
    """Algebraic bounded-distance decoding of a ``bch`` codebook."""

    name = "bdd"

    def __init__(self, book: Codebook):
        if book.strategy != "bch":
            raise CodebookError("bounded-distance decoding needs a bch codebook")
        super().__init__(book)
        self.code = book.bch()
        self.lut = _message_lookup(book)

    @property
    def can_fail(self):
        return True

    def decode(self, received, rng=None):
        x = np.asarray(received, dtype=np.uint8)
        out = np.full(x.shape[0], FAILED, dtype=np.int64)
        for i, row in enumerate(x):
            msg = gf2_bch.bounded_distance_decode(self.code, row)
            if msg is not None:
                out[i] = self.lut[bits_to_int(msg)]
        return out


class ShiftDecoder(Decoder):
    """Matched filter over a standalone shift book with C <= 2^L_shift."""

    name = "matched"

    def __init__(self, book: Codebook):
        if book.strategy != "shift":
            raise CodebookError("matched filtering needs a shift codebook")
        self.l_shift = int(book.meta["L_shift"])
        if book.num_columns > (1 << self.l_shift):
            raise CodebookError("a standalone shift book only separates 2^L_shift columns")
        super().__init__(book)

    def decode(self, received, rng=None):
        return matched_filter_batch(received, self.l_shift).astype(np.int64)


class HybridDecoder(Decoder):
    """MDD on the BCH segment for the high group, matched filter for the phase."""

    name = "hybrid"

    def __init__(self, book: Codebook):
        params = hybrid_params_of(book)
        super().__init__(book)
        self.params = params
        self.segment = pack_codebook(hybrid_segment_book(params))

    def decode(self, received, rng=None):
        return hybrid_decode_batch(received, self.params, self.segment).columns


def hybrid_decode_batch(queries, params, book: PackedCodebook) -> DecodeResult:
    """Decode ``[BCH segment | shift segment]`` words to columns.

    ``book`` holds the BCH segment entries indexed by high group g, so the
    MDD index is g itself. The shift burst of group g starts at phase
    ``2^L_shift * (g mod 2)``.
    """
    n1 = params.bch_length
    q = _as_queries(queries, params.T)
    seg = mdd_decode_batch(q[:, :n1], book)
    g = seg.columns
    ls = params.L_shift
    offsets = shift_phase(g << ls, ls)
    v = matched_filter_batch(q[:, n1:], ls, offsets)
    return DecodeResult(columns=(g << ls) + v, distances=seg.distances)


def make_decoder(book: Codebook, kind: str | None = None, **kw) -> Decoder:
    """Default decoder per strategy, or the named one (mdd, bdd, direct, vote)."""
    if kind is None:
        kind = {
            "gray": "direct",
            "longrun": "direct",
            "repetition": "vote",
            "bch": "mdd",
            "shift": "matched",
            "hybrid": "hybrid",
        }[book.strategy]
    table = {
        "direct": GrayDecoder,
        "vote": RepetitionDecoder,
        "mdd": MddDecoder,
        "bdd": BddDecoder,
        "matched": ShiftDecoder,
        "hybrid": HybridDecoder,
    }
    if kind not in table:
        raise ValueError(f"unknown decoder {kind!r}")
    return table[kind](book, **kw)


def gray_column(bits) -> np.ndarray:
    """Column index of reflected-Gray message bits."""
    return gray_inverse(bits_to_int(bits))
