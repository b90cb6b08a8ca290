"""Per-column pattern tables (LUTs) for every coding strategy.

A :class:`Codebook` stores a ``(C, T)`` uint8 table: row ``c`` is the temporal
codeword of projector column ``c`` and column ``t`` of the table is the
projected pattern of frame ``t``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .gf2_bch import BchCode, all_codewords, build_bch, build_field, smallest_code_for

STRATEGIES = ("gray", "longrun", "repetition", "bch", "shift", "hybrid")


class CodebookError(ValueError):
    pass


class LutParseError(ValueError):
    """Malformed LUT file; carries the 1-based line and 0-based offset."""

    def __init__(self, msg: str, line: int, offset: int = 0):
        super().__init__(f"line {line}, offset {offset}: {msg}")
        self.line = line
        self.offset = offset


def int_to_bits(values, L: int) -> np.ndarray:
    """Integers to MSB-first bit rows."""
    v = np.asarray(values, dtype=np.int64)
    return ((v[..., None] >> np.arange(L - 1, -1, -1)) & 1).astype(np.uint8)


def bits_to_int(bits) -> np.ndarray:
    b = np.asarray(bits, dtype=np.int64)
    L = b.shape[-1]
    return (b << np.arange(L - 1, -1, -1)).sum(axis=-1)


def gray_code(i):
    return np.asarray(i) ^ (np.asarray(i) >> 1)


def gray_inverse(g):
    g = np.asarray(g, dtype=np.int64).copy()
    shift = g >> 1
    while np.any(shift):
        g ^= shift
        shift >>= 1
    return g


@dataclass(frozen=True, eq=False)
class Codebook:
    """Codeword table plus the metadata needed to decode it.

    ``meta`` always holds ``L`` (message bits). Strategy-specific keys:
    ``r``/``base`` for repetition, ``n,k,d,m,shorten_by`` for BCH-based books,
    ``L_bch``/``L_shift`` for hybrid and shift books.
    """

    strategy: str
    table: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        tab = np.ascontiguousarray(self.table, dtype=np.uint8)
        if tab.ndim != 2:
            raise CodebookError("table must be 2-D (columns x frames)")
        if tab.size and tab.max() > 1:
            raise CodebookError("table must be binary")
        tab.setflags(write=False)
        object.__setattr__(self, "table", tab)
        if self.strategy not in STRATEGIES:
            raise CodebookError(f"unknown strategy {self.strategy!r}")

    @property
    def num_columns(self) -> int:
        return self.table.shape[0]

    @property
    def codeword_length(self) -> int:
        return self.table.shape[1]

    C = num_columns
    T = codeword_length

    @property
    def patterns(self) -> np.ndarray:
        """``(T, C)`` view: one projected pattern per frame."""
        return self.table.T

    @property
    def messages(self) -> np.ndarray:
        """Message bits per column (the column -> message map)."""
        L = int(self.meta["L"])
        if self.strategy in ("gray", "longrun", "bch", "repetition"):
            return self.table[:, :L].copy()
        cols = np.arange(self.num_columns)
        if self.strategy == "shift":
            return int_to_bits(cols % (1 << L), L)
        ls = int(self.meta["L_shift"])
        lb = int(self.meta["L_bch"])
        high = int_to_bits(gray_code(cols >> ls), lb)
        return np.concatenate([high, int_to_bits(cols & ((1 << ls) - 1), ls)], axis=1)

    def bch(self) -> BchCode:
        """The BCH code behind a ``bch`` or ``hybrid`` book."""
        if "n" not in self.meta:
            raise CodebookError(f"{self.strategy} codebook has no BCH code")
        gf = build_field(int(self.meta["m"]))
        code = build_bch(gf, int(self.meta["d"]))
        if code.k != int(self.meta["k"]):
            raise CodebookError("BCH metadata is inconsistent")
        return code.shortened(int(self.meta["shorten_by"]))

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return (
            self.strategy == other.strategy
            and self.meta == other.meta
            and np.array_equal(self.table, other.table)
        )

    __hash__ = None


def _check_distinct(book: Codebook) -> None:
    if book.strategy == "shift":
        # Only 2^(L_shift+1) phases exist, so wide standalone books repeat.
        return
    uniq = np.unique(book.table, axis=0)
    if uniq.shape[0] != book.num_columns:
        raise CodebookError(f"{book.strategy} codebook has repeated codewords")


def _columns(L: int, C: int | None) -> int:
    total = 1 << L
    if C is None:
        return total
    if not 1 <= C <= total:
        raise CodebookError(f"C must be in [1, {total}] for L={L}, got {C}")
    return C


# ---- Gray family -------------------------------------------------------------


def gray_messages(L: int) -> np.ndarray:
    """Reflected Gray sequence as a ``(2^L, L)`` MSB-first bit array."""
    if int(L) != L or not 1 <= L <= 16:
        raise ValueError(f"L must be in [1, 16], got {L}")
    return int_to_bits(gray_code(np.arange(1 << L)), L)


def _interior_min_run(seq_states: list[int], L: int) -> int:
    N = len(seq_states)
    best = N
    for b in range(L):
        row = [(s >> b) & 1 for s in seq_states]
        ch = [i for i in range(1, N) if row[i] != row[i - 1]]
        for j in range(len(ch) - 1):
            best = min(best, ch[j + 1] - ch[j])
    return best


def search_long_run_path(L: int, min_run: int, budget: int | None = None, seed: int = 0):
    """DFS for a Hamiltonian path of the L-cube whose interior runs are >= min_run.

    Each bit may flip again only ``min_run`` steps after its previous flip.
    Children are tried fewest-onward-options first. Returns the state list,
    or None if the (optionally budgeted) search is exhausted.
    """
    rng = np.random.default_rng(seed)
    N = 1 << L
    visited = bytearray(N)
    last = [-N] * L
    path = [0]
    visited[0] = 1
    nodes = 0

    def onward(h, i):
        return sum(1 for b in range(L) if i - last[b] >= min_run and not visited[h ^ (1 << b)])

    def rec(h, i):
        nonlocal nodes
        nodes += 1
        if budget is not None and nodes > budget:
            raise TimeoutError
        if len(path) == N:
            return True
        scored = []
        for b in range(L):
            nh = h ^ (1 << b)
            if visited[nh] or i - last[b] < min_run:
                continue
            visited[nh] = 1
            old, last[b] = last[b], i
            n = onward(nh, i + 1)
            visited[nh] = 0
            last[b] = old
            if n == 0 and len(path) + 1 < N:
                continue
            scored.append((n, rng.random(), b, nh))
        scored.sort()
        for _, _, b, nh in scored:
            visited[nh] = 1
            old, last[b] = last[b], i
            path.append(nh)
            if rec(nh, i + 1):
                return True
            visited[nh] = 0
            last[b] = old
            path.pop()
        return False

    try:
        found = rec(0, 0)
    except TimeoutError:
        return None
    return list(path) if found else None


_BUNDLED = {L: f"longrun_gray_{L}.txt" for L in (6, 7, 10)}
_SEARCHED = range(1, 6)


def supported_long_run_lengths() -> list[int]:
    return sorted(set(_SEARCHED) | set(_BUNDLED))


def _load_bundled(name: str) -> list[int]:
    text = resources.files("spsl").joinpath("data", name).read_text()
    return [int(tok) for line in text.splitlines() if not line.startswith("#") for tok in line.split()]


@lru_cache(maxsize=None)
def _long_run_states(L: int) -> tuple[int, ...]:
    if L in _BUNDLED:
        states = _load_bundled(_BUNDLED[L])
    elif L <= 2:
        states = [int(v) for v in gray_code(np.arange(1 << L))]
    else:
        # Small cubes: exhaustive search from the largest run downwards.
        states = None
        for target in range(L, 0, -1):
            states = search_long_run_path(L, target)
            if states is not None:
                break
    if sorted(states) != list(range(1 << L)):
        raise CodebookError(f"bundled long-run table for L={L} is not a permutation")
    steps = np.bitwise_xor(states[1:], states[:-1])
    if np.any(steps & (steps - 1)):
        raise CodebookError(f"long-run table for L={L} has a step changing more than one bit")
    return tuple(states)


def long_run_gray_messages(L: int) -> np.ndarray:
    """Gray sequence whose bit planes have long minimum runs (see ``stripe_width``)."""
    if L not in supported_long_run_lengths():
        raise ValueError(f"long-run Gray not available for L={L}; supported: {supported_long_run_lengths()}")
    return int_to_bits(_long_run_states(L), L)


def gray_codebook(L: int, C: int | None = None) -> Codebook:
    C = _columns(L, C)
    book = Codebook("gray", gray_messages(L)[:C], {"L": L})
    _check_distinct(book)
    return book


def long_run_gray_codebook(L: int, C: int | None = None) -> Codebook:
    C = _columns(L, C)
    book = Codebook("longrun", long_run_gray_messages(L)[:C], {"L": L})
    _check_distinct(book)
    return book


def repetition_codebook(base: Codebook, r: int) -> Codebook:
    """Replay the whole pattern sequence r times."""
    if int(r) != r or r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    if r == 1:
        return base
    if base.strategy not in ("gray", "longrun"):
        raise CodebookError("repetition is defined over gray or longrun books")
    meta = {"L": int(base.meta["L"]), "base": base.strategy, "r": int(r)}
    return Codebook("repetition", np.tile(base.table, (1, r)), meta)


# ---- BCH ---------------------------------------------------------------------


def _bch_meta(code: BchCode) -> dict:
    return {
        "m": code.field.m,
        "n": code.n,
        "k": code.k,
        "d": code.d,
        "shorten_by": code.shorten_by,
    }


def bch_encode_many(code: BchCode, messages) -> np.ndarray:
    """Systematic encoding of a batch, via the codeword table for small k."""
    msgs = np.asarray(messages, dtype=np.uint8)
    if msgs.ndim != 2 or msgs.shape[1] != code.message_bits:
        raise CodebookError(f"messages must be (N, {code.message_bits}) bits, got {msgs.shape}")
    words = all_codewords(code)
    return words[bits_to_int(msgs)]


def bch_codebook(messages, code: BchCode) -> Codebook:
    """Column i gets the shortened systematic encoding of message i."""
    msgs = np.asarray(messages, dtype=np.uint8)
    if msgs.ndim != 2:
        raise CodebookError("messages must be a 2-D bit array")
    lbits = msgs.shape[1]
    if lbits != code.message_bits:
        raise CodebookError(
            f"message length {lbits} does not match {code!r} carrying {code.message_bits} bits"
        )
    if msgs.shape[0] > (1 << lbits):
        raise CodebookError(f"{msgs.shape[0]} messages exceed 2^{lbits}")
    book = Codebook("bch", bch_encode_many(code, msgs), {"L": lbits, **_bch_meta(code)})
    _check_distinct(book)
    return book


def bch_gray_codebook(L: int, n: int, d: int | None = None, C: int | None = None) -> Codebook:
    """Gray messages under a BCH code of length n, shortened to L message bits.

    Without ``d`` the strongest code that still carries L bits is used.
    """
    m = int(round(math.log2(n + 1)))
    if (1 << m) - 1 != n:
        raise CodebookError(f"n must be 2^m - 1, got {n}")
    if d is None:
        code = smallest_code_for(m, L)
    else:
        code = build_bch(build_field(m), d)
        if code.k < L:
            raise CodebookError(f"{code!r} cannot carry {L} message bits")
        code = code.shortened(code.k - L)
    return bch_codebook(gray_messages(L)[: _columns(L, C)], code)


# ---- binary shift and hybrid ---------------------------------------------------


def shift_codewords(phases, L_shift: int) -> np.ndarray:
    """Burst of 2^L_shift ones starting at frame ``phase`` (cyclic), one row per phase."""
    half = 1 << L_shift
    t = np.arange(2 * half)
    p = np.asarray(phases, dtype=np.int64)[..., None]
    return (((t - p) % (2 * half)) < half).astype(np.uint8)


def shift_phase(columns, L_shift: int) -> np.ndarray:
    """Codeword phase of each column.

    The phase advances by one frame per column over the full period
    2^(L_shift+1), so each pattern is a square wave with stripes 2^L_shift wide.
    """
    return np.asarray(columns, dtype=np.int64) % (1 << (L_shift + 1))


def binary_shift_codebook(L_shift: int, C: int) -> Codebook:
    if int(L_shift) != L_shift or L_shift < 1:
        raise ValueError(f"L_shift must be >= 1, got {L_shift}")
    if C < (1 << L_shift):
        raise CodebookError(f"C must be >= 2^L_shift = {1 << L_shift}")
    table = shift_codewords(shift_phase(np.arange(C), L_shift), L_shift)
    return Codebook("shift", table, {"L": L_shift, "L_shift": L_shift})


@dataclass(frozen=True)
class HybridParams:
    L: int
    L_bch: int
    L_shift: int
    bch: BchCode

    def __post_init__(self):
        if self.L != self.L_bch + self.L_shift:
            raise ValueError(f"L={self.L} must equal L_bch + L_shift = {self.L_bch + self.L_shift}")
        if self.L_shift < 1 or self.L_bch < 1:
            raise ValueError("L_bch and L_shift must be >= 1")
        if self.bch.message_bits != self.L_bch:
            raise CodebookError(
                f"{self.bch!r} carries {self.bch.message_bits} bits, hybrid needs {self.L_bch}"
            )

    @property
    def bch_length(self) -> int:
        return self.bch.length

    @property
    def T(self) -> int:
        return self.bch.length + (1 << (self.L_shift + 1))


def hybrid_params(L: int = 10, L_bch: int = 7, L_shift: int = 3, n: int = 63, d: int | None = None) -> HybridParams:
    """Pick a BCH code of length n for the L_bch high-order bits.

    Without ``d`` the code is the strongest standard one whose dimension is at
    least L_bch, shortened down to L_bch message bits.
    """
    m = int(round(math.log2(n + 1)))
    if (1 << m) - 1 != n:
        raise CodebookError(f"n must be 2^m - 1, got {n}")
    if d is None:
        code = smallest_code_for(m, L_bch)
    else:
        code = build_bch(build_field(m), d)
        if code.k < L_bch:
            raise CodebookError(f"{code!r} has dimension below L_bch={L_bch}")
        code = code.shortened(code.k - L_bch)
    return HybridParams(L=L, L_bch=L_bch, L_shift=L_shift, bch=code)


def hybrid_segment_book(params: HybridParams) -> Codebook:
    """BCH segment codewords indexed by the high-order group g (not by column)."""
    g = np.arange(1 << params.L_bch)
    return bch_codebook(int_to_bits(gray_code(g), params.L_bch), params.bch)


def hybrid_codebook(params: HybridParams, C: int | None = None) -> Codebook:
    C = _columns(params.L, C)
    cols = np.arange(C)
    seg = hybrid_segment_book(params).table[cols >> params.L_shift]
    tail = shift_codewords(shift_phase(cols, params.L_shift), params.L_shift)
    meta = {"L": params.L, "L_bch": params.L_bch, "L_shift": params.L_shift, **_bch_meta(params.bch)}
    book = Codebook("hybrid", np.concatenate([seg, tail], axis=1), meta)
    _check_distinct(book)
    sw = stripe_width(book)
    if sw < (1 << params.L_shift) and C > (1 << (params.L_shift + 1)):
        raise CodebookError(f"hybrid stripe width {sw} below 2^L_shift")
    return book


def hybrid_params_of(book: Codebook) -> HybridParams:
    if book.strategy != "hybrid":
        raise CodebookError("not a hybrid codebook")
    m = book.meta
    return HybridParams(int(m["L"]), int(m["L_bch"]), int(m["L_shift"]), book.bch())


# ---- analysis ----------------------------------------------------------------


def row_runs(row) -> np.ndarray:
    """Lengths of maximal runs of equal bits, left to right."""
    r = np.asarray(row)
    if r.size == 0:
        return np.zeros(0, dtype=np.int64)
    edges = np.flatnonzero(np.diff(r)) + 1
    bounds = np.concatenate([[0], edges, [r.size]])
    return np.diff(bounds)


def stripe_width(book: Codebook) -> int:
    """Narrowest stripe over all projected patterns.

    Runs cut off by the left or right image border are not counted, since
    their true width is unknown; a pattern without any full stripe
    contributes the number of columns.
    """
    best = book.num_columns
    for row in book.patterns:
        runs = row_runs(row)
        if runs.size > 2:
            best = min(best, int(runs[1:-1].min()))
    return best


def burst_rate(pattern_rate: float, T: int) -> int:
    """Complete codeword bursts per second at a given binary-frame rate."""
    if T < 1:
        raise ValueError("T must be >= 1")
    return int(pattern_rate // T)


# ---- LUT files ---------------------------------------------------------------

LUT_MAGIC = "SPSL-LUT"
LUT_VERSION = 1


def _format_meta(meta: dict) -> str:
    parts = []
    for k in sorted(meta):
        v = str(meta[k])
        if any(ch in v for ch in ",=\n") or any(ch in k for ch in ",=\n"):
            raise CodebookError(f"metadata entry {k}={v} cannot be serialized")
        parts.append(f"{k}={v}")
    return ",".join(parts)


def _parse_value(v: str):
    try:
        return int(v)
    except ValueError:
        return v


def serialize_lut(book: Codebook, path) -> None:
    rows = "\n".join("".join("1" if b else "0" for b in row) for row in book.patterns)
    header = f"{LUT_MAGIC} {LUT_VERSION} {book.strategy} {book.T} {book.C}"
    text = f"{header}\n{_format_meta(book.meta)}\n{rows}\n"
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def parse_lut(text: str) -> Codebook:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise LutParseError("empty file", 1)
    head = lines[0].split(" ")
    if len(head) != 5 or head[0] != LUT_MAGIC:
        raise LutParseError(f"expected '{LUT_MAGIC} <version> <strategy> <T> <C>'", 1)
    if head[1] != str(LUT_VERSION):
        raise LutParseError(f"unsupported version {head[1]}", 1, lines[0].index(head[1]))
    strategy = head[2]
    if strategy not in STRATEGIES:
        raise LutParseError(f"unknown strategy {strategy!r}", 1, lines[0].index(strategy))
    try:
        T, C = int(head[3]), int(head[4])
    except ValueError:
        raise LutParseError("T and C must be integers", 1, len(" ".join(head[:3])) + 1) from None
    if T < 1 or C < 1:
        raise LutParseError("T and C must be positive", 1)
    if len(lines) < 2:
        raise LutParseError("missing metadata line", 2)
    meta = {}
    if lines[1]:
        off = 0
        for part in lines[1].split(","):
            if "=" not in part:
                raise LutParseError(f"metadata entry {part!r} lacks '='", 2, off)
            k, v = part.split("=", 1)
            meta[k] = _parse_value(v)
            off += len(part) + 1
    body = lines[2:]
    if len(body) != T:
        raise LutParseError(f"header declares T={T} rows, found {len(body)}", 3 + min(len(body), T))
    rows = np.zeros((T, C), dtype=np.uint8)
    for t, line in enumerate(body):
        lineno = t + 3
        if len(line) != C:
            raise LutParseError(f"expected {C} characters, found {len(line)}", lineno, min(len(line), C))
        arr = np.frombuffer(line.encode("ascii", "replace"), dtype=np.uint8)
        bad = np.flatnonzero((arr != ord("0")) & (arr != ord("1")))
        if bad.size:
            raise LutParseError(f"invalid character {line[bad[0]]!r}", lineno, int(bad[0]))
        rows[t] = arr - ord("0")
    if "L" not in meta:
        raise LutParseError("metadata must define L", 2)
    try:
        return Codebook(strategy, rows.T.copy(), meta)
    except CodebookError as e:
        raise LutParseError(str(e), 3) from None


def deserialize_lut(path) -> Codebook:
    with open(path) as f:
        return parse_lut(f.read())
