"""Monte-Carlo decoding-error estimates and (phi_a, phi_p) grid sweeps."""

from __future__ import annotations

import csv
import io
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .channel import RngStream, flip_threshold, uniform_u32
from .codebook import (
    Codebook,
    bch_gray_codebook,
    binary_shift_codebook,
    gray_codebook,
    hybrid_codebook,
    hybrid_params,
    long_run_gray_codebook,
    repetition_codebook,
)
from .decode import FAILED, Decoder, make_decoder
from .photon_stats import FlipProbs, FluxCondition, flip_probabilities

METRICS = ("exact", "rmse")
CSV_HEADER = ("phi_a", "phi_p", "strategy", "metric", "value", "n_iter", "seed")

# Bits of one stream id: grid point | strategy | message.
_POINT_SHIFT = 32
_STRATEGY_SHIFT = 20
_TIE_STREAM = 1 << 63


@dataclass(frozen=True)
class McConfig:
    n_iter: int = 100
    seed: int = 0
    metric: str = "exact"
    # Bits generated per decode call; fixed so results do not depend on memory.
    chunk_bits: int = 1 << 22

    def __post_init__(self):
        if int(self.n_iter) != self.n_iter or self.n_iter < 1:
            raise ValueError(f"n_iter must be >= 1, got {self.n_iter}")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")


@dataclass(frozen=True)
class McResult:
    """Message-averaged error with its standard error."""

    value: float
    stderr: float
    trials: int

    def __float__(self):
        return float(self.value)

    def interval(self, k: float = 4.0) -> tuple[float, float]:
        return self.value - k * self.stderr, self.value + k * self.stderr


def run_mc(book: Codebook, decoder: Decoder, probs: FlipProbs, cfg: McConfig, stream_base: int = 0) -> McResult:
    """Corrupt every column's codeword n_iter times, decode, average per message.

    Message c draws its flips (and any tie coins) from streams keyed by
    ``stream_base + c``, so the estimate does not depend on chunking or
    thread count.
    """
    C, T = book.num_columns, book.T
    n = cfg.n_iter
    per_chunk = max(1, cfg.chunk_bits // (n * T))
    thresh = flip_threshold(np.where(book.table == 1, probs.p_bright, probs.p_dark))
    per_msg = np.empty(C)
    total_sq = 0.0
    total_sq2 = 0.0
    for start in range(0, C, per_chunk):
        stop = min(C, start + per_chunk)
        m = stop - start
        rx = np.empty((m, n, T), dtype=np.uint8)
        for c in range(start, stop):
            u = uniform_u32(RngStream(cfg.seed, stream_base + c).generator(), (n, T))
            _k.corrupt(rx[c - start], u, book.table[c], thresh[c])
        if decoder.uses_rng:
            # Tie coins per message too, so chunking cannot shift them.
            cols = np.stack([
                decoder.decode(rx[c - start], rng=RngStream(cfg.seed, _TIE_STREAM | (stream_base + c)).generator())
                for c in range(start, stop)
            ])
        else:
            cols = decoder.decode(rx.reshape(m * n, T)).reshape(m, n)
        truth = np.arange(start, stop)[:, None]
        if cfg.metric == "exact":
            per_msg[start:stop] = (cols != truth).mean(axis=1)
        else:
            if np.any(cols == FAILED):
                raise ValueError("rmse needs a decoder that always returns a column")
            sq = (cols - truth).astype(np.float64) ** 2
            per_msg[start:stop] = sq.mean(axis=1)
            total_sq += float(sq.sum())
            total_sq2 += float((sq**2).sum())
    N = C * n
    if cfg.metric == "exact":
        p = float(per_msg.mean())
        return McResult(p, math.sqrt(max(p * (1 - p), 0.0) / N), N)
    mse = float(per_msg.mean())
    rmse = math.sqrt(mse)
    var = max(total_sq2 / N - (total_sq / N) ** 2, 0.0)
    se = math.sqrt(var / N) / (2 * rmse) if rmse > 0 else 0.0
    return McResult(rmse, se, N)


# ---- strategies by name ---------------------------------------------------------

_NAME = re.compile(r"^(gray|longrun|rep|lrrep|bch|hybrid|shift)(\d*)(-bdd)?$")


@dataclass(frozen=True, eq=False)
class Strategy:
    name: str
    book: Codebook
    decoder: Decoder


def make_strategy(name: str, metric: str = "exact", L: int = 10) -> Strategy:
    """Build a codebook/decoder pair from a short name.

    ``gray``, ``longrun``; ``rep<r>`` / ``lrrep<r>`` repeat the Gray / long-run
    Gray book r times; ``bch<n>`` is Gray under the strongest length-n BCH code
    (``-bdd`` selects algebraic decoding); ``hybrid<n>`` uses L_bch = L - 3,
    L_shift = 3; ``shift<L_shift>`` is a standalone shift book.
    """
    m = _NAME.match(name)
    if not m:
        raise ValueError(f"unknown strategy {name!r}")
    kind, num, bdd = m.group(1), m.group(2), m.group(3)
    if bdd and kind != "bch":
        raise ValueError(f"-bdd only applies to bch strategies, got {name!r}")
    needs_num = kind in ("rep", "lrrep", "bch", "hybrid", "shift")
    if needs_num != bool(num):
        raise ValueError(f"malformed strategy name {name!r}")
    tie = "random" if metric == "rmse" else "error"
    if kind == "gray":
        book = gray_codebook(L)
        dec = make_decoder(book)
    elif kind == "longrun":
        book = long_run_gray_codebook(L)
        dec = make_decoder(book)
    elif kind in ("rep", "lrrep"):
        base = gray_codebook(L) if kind == "rep" else long_run_gray_codebook(L)
        book = repetition_codebook(base, int(num))
        dec = make_decoder(book, tie=tie) if book.strategy == "repetition" else make_decoder(book)
    elif kind == "bch":
        book = bch_gray_codebook(L, int(num))
        if bdd and metric == "rmse":
            raise ValueError("bounded-distance decoding can fail and has no rmse")
        dec = make_decoder(book, "bdd" if bdd else "mdd")
    elif kind == "hybrid":
        book = hybrid_codebook(hybrid_params(L, L - 3, 3, int(num)))
        dec = make_decoder(book)
    else:
        ls = int(num)
        book = binary_shift_codebook(ls, 1 << ls)
        dec = make_decoder(book)
    return Strategy(name, book, dec)


# ---- sweeps -------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    phi_a: float
    phi_p: float
    strategy: str
    metric: str
    value: float
    n_iter: int
    seed: int
    stderr: float = 0.0


@dataclass
class SweepTable:
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([repr(float(r.phi_a)), repr(float(r.phi_p)), r.strategy, r.metric, repr(float(r.value)), r.n_iter, r.seed])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_csv())

    @classmethod
    def read_csv(cls, path) -> "SweepTable":
        with open(path) as f:
            rd = csv.DictReader(f)
            if tuple(rd.fieldnames or ()) != CSV_HEADER:
                raise ValueError(f"{path}: unexpected header {rd.fieldnames}")
            rows = [
                SweepRow(float(d["phi_a"]), float(d["phi_p"]), d["strategy"], d["metric"], float(d["value"]), int(d["n_iter"]), int(d["seed"]))
                for d in rd
            ]
        return cls(rows)

    def select(self, strategy: str) -> list:
        return [r for r in self.rows if r.strategy == strategy]

    def grid(self, strategy: str, attr: str = "value"):
        """(phi_a values, phi_p values, array[len(phi_a), len(phi_p)])."""
        rows = self.select(strategy)
        pa = sorted({r.phi_a for r in rows})
        pp = sorted({r.phi_p for r in rows})
        out = np.full((len(pa), len(pp)), np.nan)
        for r in rows:
            out[pa.index(r.phi_a), pp.index(r.phi_p)] = getattr(r, attr)
        return np.array(pa), np.array(pp), out


def default_phi_a(n: int = 8) -> np.ndarray:
    """Ambient rates spanning p_dark from about 0.01 to 0.6 at t_exp = 1e-4 s."""
    return np.logspace(2, 4, n)


def default_phi_p(n: int = 8) -> np.ndarray:
    """Projector rates spanning p_bright from about 0.8 down to 1e-4 (phi_a = 0)."""
    return np.logspace(3.3, 5, n)


def default_threads() -> int:
    return os.cpu_count() or 1


def stream_base(point: int, strategy: int) -> int:
    return (point << _POINT_SHIFT) | (strategy << _STRATEGY_SHIFT)


def sweep_grid(strategies, phi_a_values, phi_p_values, template: FluxCondition | None = None, cfg: McConfig | None = None, threads: int = 1) -> SweepTable:
    """Evaluate every strategy at every (phi_a, phi_p) point.

    ``strategies`` holds :class:`Strategy` objects or names. Rows come out in
    (phi_a, phi_p, strategy) order whatever the thread count.
    """
    cfg = cfg or McConfig()
    template = template or FluxCondition(0.0, 0.0)
    strats = [s if isinstance(s, Strategy) else make_strategy(s, cfg.metric) for s in strategies]
    pa = [float(v) for v in phi_a_values]
    pp = [float(v) for v in phi_p_values]
    if not strats or not pa or not pp:
        raise ValueError("strategies and both flux grids must be non-empty")
    jobs = []
    for i, a in enumerate(pa):
        for j, p in enumerate(pp):
            cond = FluxCondition(a, p, template.t_exp, template.r_q)
            probs = flip_probabilities(cond)
            for k, s in enumerate(strats):
                jobs.append((a, p, k, s, probs, stream_base(i * len(pp) + j, k)))

    def run(job):
        a, p, k, s, probs, base = job
        res = run_mc(s.book, s.decoder, probs, cfg, stream_base=base)
        return SweepRow(a, p, s.name, cfg.metric, res.value, cfg.n_iter, cfg.seed, res.stderr)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(run, jobs))
    else:
        rows = [run(j) for j in jobs]
    return SweepTable(rows)


def dominates(better: SweepRow | McResult, worse: SweepRow | McResult, k: float = 4.0) -> bool:
    """True unless ``better`` is significantly above ``worse`` (intervals disjoint)."""
    return better.value - k * better.stderr <= worse.value + k * worse.stderr
