"""Command line: LUT generation, Monte-Carlo sweeps, scene runs, decoder benchmarks.

Every command writes into one output directory (``--out-dir``, else
``$SPSL_OUT_DIR``, else the working directory) together with a
``<name>.manifest.json`` that ``spsl rerun`` replays and verifies.

Exit status: 0 success, 2 usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from . import gf2_bch
from .channel import RngStream, corrupt_codeword
from .codebook import (
    CodebookError,
    Codebook,
    LutParseError,
    bch_gray_codebook,
    binary_shift_codebook,
    deserialize_lut,
    gray_codebook,
    hybrid_codebook,
    hybrid_params,
    long_run_gray_codebook,
    repetition_codebook,
    serialize_lut,
    stripe_width,
)
from .decode import BddDecoder, mdd_decode_batch, naive_mdd, pack_codebook
from .montecarlo import McConfig, default_phi_a, default_phi_p, make_strategy, sweep_grid
from .photon_stats import NAMED_CONDITIONS, FlipProbs, FluxCondition, condition_for
from .scene_sim import (
    KINDS,
    Geometry,
    make_scene,
    reconstruct_depth,
    run_pipeline,
    write_correspondence_pgm,
    write_depth_text,
    write_metrics_csv,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
OUT_ENV = "SPSL_OUT_DIR"


class DataError(Exception):
    """Bad input data or a failed consistency check (exit status 3)."""


class UsageError(Exception):
    """Invalid argument combination (exit status 2)."""


# ---- argument helpers ---------------------------------------------------------


def exposure(text: str) -> float:
    """Seconds; ``us`` / ``ms`` / ``s`` suffixes are accepted."""
    t = text.strip().lower()
    scale = 1.0
    for suffix, s in (("us", 1e-6), ("ms", 1e-3), ("s", 1.0)):
        if t.endswith(suffix):
            t, scale = t[: -len(suffix)], s
            break
    try:
        v = float(t) * scale
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad exposure {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("exposure must be positive")
    return v


def float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def plain_name(text: str) -> str:
    if not text or os.sep in text or "/" in text or text in (".", ".."):
        raise argparse.ArgumentTypeError("name must be a plain file stem")
    return text


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        h.update(f.read())
    return h.hexdigest()


def _out_path(args, filename: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, filename)


def _params(args) -> dict:
    skip = {"func", "out_dir", "threads"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def write_manifest(args, outputs: list, volatile=()) -> str:
    """Record command, parameters, seed, version and output hashes."""
    files = {}
    for name in outputs:
        files[name] = None if name in volatile else _sha256(os.path.join(args.out_dir, name))
    man = {
        "command": args.command,
        "params": _params(args),
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "outputs": files,
    }
    path = _out_path(args, f"{args.name}.manifest.json")
    with open(path, "w") as f:
        json.dump(man, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _condition(args) -> FluxCondition:
    if args.condition:
        return condition_for(NAMED_CONDITIONS[args.condition], args.t_exp, args.r_q)
    if args.phi_a is None or args.phi_p is None:
        raise UsageError("give --condition or both --phi-a and --phi-p")
    return FluxCondition(args.phi_a, args.phi_p, args.t_exp, args.r_q)


# ---- lut ------------------------------------------------------------------------


def build_lut(args) -> Codebook:
    s = args.strategy
    if s == "gray":
        return gray_codebook(args.L, args.C)
    if s == "longrun":
        return long_run_gray_codebook(args.L, args.C)
    if s == "repetition":
        base = gray_codebook(args.L, args.C) if args.base == "gray" else long_run_gray_codebook(args.L, args.C)
        return repetition_codebook(base, args.r)
    if s == "bch":
        if args.n is None:
            raise UsageError("bch needs --n")
        return bch_gray_codebook(args.L, args.n, args.d, args.C)
    if s == "shift":
        ls = args.Lshift if args.Lshift is not None else args.L
        return binary_shift_codebook(ls, args.C or (1 << ls))
    ls = 3 if args.Lshift is None else args.Lshift
    lb = args.L - ls if args.Lbch is None else args.Lbch
    return hybrid_codebook(hybrid_params(args.L, lb, ls, args.n or 63, args.d), args.C)


def cmd_lut(args) -> int:
    book = build_lut(args)
    fname = f"{args.name}.lut"
    serialize_lut(book, _out_path(args, fname))
    write_manifest(args, [fname])
    print(f"strategy={book.strategy} T={book.T} C={book.C} stripe={stripe_width(book)} file={fname}")
    return EXIT_OK


# ---- sweep ----------------------------------------------------------------------


def cmd_sweep(args) -> int:
    if not args.strategies:
        raise UsageError("at least one strategy is required")
    try:
        strats = [make_strategy(s, args.metric, args.L) for s in args.strategies]
    except ValueError as e:
        raise UsageError(str(e)) from None
    if args.condition:
        c = condition_for(NAMED_CONDITIONS[args.condition], args.t_exp, args.r_q)
        pa, pp = [c.phi_a], [c.phi_p]
    else:
        pa = args.phi_a if args.phi_a else list(default_phi_a(args.grid))
        pp = args.phi_p if args.phi_p else list(default_phi_p(args.grid))
    cfg = McConfig(n_iter=args.n_iter, seed=args.seed, metric=args.metric)
    table = sweep_grid(strats, pa, pp, FluxCondition(0.0, 0.0, args.t_exp, args.r_q), cfg, args.threads)
    fname = f"{args.name}.csv"
    table.write_csv(_out_path(args, fname))
    write_manifest(args, [fname])
    print(f"{len(table.rows)} rows -> {fname}")
    return EXIT_OK


# ---- scene ----------------------------------------------------------------------


def cmd_scene(args) -> int:
    cond = _condition(args)
    try:
        strat = make_strategy(args.strategy, "exact", args.L)
    except ValueError as e:
        raise UsageError(str(e)) from None
    geom = Geometry(args.f, args.b, args.mismatch)
    try:
        scene = make_scene(args.kind, args.width, args.height, geom, args.albedo, strat.book.C, args.z0)
    except ValueError as e:
        raise DataError(f"scene construction failed: {e}") from None
    corr, metrics = run_pipeline(scene, strat.book, cond, args.defocus, strat.decoder, args.seed)
    names = [f"{args.name}_corr.pgm", f"{args.name}_depth.txt", f"{args.name}_metrics.csv"]
    write_correspondence_pgm(_out_path(args, names[0]), corr)
    write_depth_text(_out_path(args, names[1]), reconstruct_depth(corr, geom))
    write_metrics_csv(_out_path(args, names[2]), [(cond.phi_a, cond.phi_p, args.strategy, metrics, args.seed)])
    write_manifest(args, names)
    print(
        f"{args.kind} {args.strategy}: rmse_all={metrics.rmse_all:.3f} mm "
        f"inliers={metrics.inlier_fraction:.4f} rmse_inliers={metrics.rmse_inliers:.3f} mm"
    )
    return EXIT_OK


# ---- bench ----------------------------------------------------------------------


def _dump_failure(args, check: str, idx, queries, got, want) -> str:
    fname = f"{args.name}_failure.json"
    sel = np.asarray(idx)[:20]
    dump = {
        "check": check,
        "mismatches": int(np.size(idx)),
        "examples": [
            {"index": int(i), "query": "".join(map(str, queries[i])), "got": int(got[i]), "expected": int(want[i])}
            for i in sel
        ],
    }
    with open(_out_path(args, fname), "w") as f:
        json.dump(dump, f, indent=2)
    return fname


def _check(args, check, queries, got, want) -> None:
    bad = np.flatnonzero(np.asarray(got) != np.asarray(want))
    if bad.size:
        fname = _dump_failure(args, check, bad, queries, got, want)
        raise DataError(f"{check}: {bad.size} mismatches, details in {fname}")


def _best_time(fn, reps: int) -> float:
    best = float("inf")
    for _ in range(reps):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def cmd_bench(args) -> int:
    if args.lut:
        try:
            book = deserialize_lut(args.lut)
        except (OSError, LutParseError) as e:
            raise DataError(f"cannot load {args.lut}: {e}") from None
    else:
        try:
            book = make_strategy(args.strategy).book
        except ValueError as e:
            raise UsageError(str(e)) from None
    packed = pack_codebook(book)
    gen = RngStream(args.seed, 0).generator()
    truth = gen.integers(0, book.C, size=args.queries)
    probs = FlipProbs(args.flip_p, args.flip_p)
    queries = corrupt_codeword(book.table[truth], probs, gen)

    # Correctness first: every codeword must decode to itself, and the packed
    # engine must agree with the bit-by-bit reference.
    own = mdd_decode_batch(book.table, packed).columns
    _check(args, "codeword self-decode", book.table, own, np.arange(book.C))
    n_ref = min(args.queries, args.check)
    fast = mdd_decode_batch(queries[:n_ref], packed)
    slow = naive_mdd(queries[:n_ref], book)
    _check(args, "packed vs naive", queries, fast.columns, slow.columns)
    bdd = None
    if book.strategy == "bch":
        code = book.bch()
        notcw = np.array([not gf2_bch.is_codeword(code, row) for row in book.table])
        _check(args, "BCH membership", book.table, np.where(notcw, -1, np.arange(book.C)), np.arange(book.C))
        bdd = BddDecoder(book)
        n_bdd = min(args.queries, 256)
        # Exactly t flips: both decoders must return the transmitted column.
        near = book.table[truth[:n_bdd]].copy()
        for row in near:
            row[gen.choice(book.T, size=code.t, replace=False)] ^= 1
        _check(args, "bdd vs mdd", near, bdd.decode(near), mdd_decode_batch(near, packed).columns)

    rows = []
    t_packed = _best_time(lambda: mdd_decode_batch(queries, packed), args.reps)
    rows.append(("packed", args.queries, t_packed))
    t_naive = _best_time(lambda: naive_mdd(queries[:n_ref], book), args.reps)
    rows.append(("naive", n_ref, t_naive))
    if bdd is not None:
        rows.append(("bdd", n_bdd, _best_time(lambda: bdd.decode(queries[:n_bdd]), 1)))
    per_q = {e: s / max(n, 1) for e, n, s in rows}
    fname = f"{args.name}.csv"
    with open(_out_path(args, fname), "w") as f:
        f.write("engine,queries,seconds,us_per_query,speedup_vs_naive\n")
        for e, n, s in rows:
            f.write(f"{e},{n},{s:.6f},{per_q[e] * 1e6:.4f},{per_q['naive'] / per_q[e]:.2f}\n")
    write_manifest(args, [fname], volatile={fname})
    print(
        f"T={book.T} C={book.C} queries={args.queries}: packed {t_packed * 1e3:.1f} ms, "
        f"speedup over naive {per_q['naive'] / per_q['packed']:.1f}x"
    )
    return EXIT_OK


# ---- rerun ----------------------------------------------------------------------


def cmd_rerun(args) -> int:
    try:
        with open(args.manifest) as f:
            man = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read manifest: {e}") from None
    if man.get("command") not in COMMANDS or man["command"] == "rerun":
        raise DataError(f"manifest names no replayable command: {man.get('command')!r}")
    ns = argparse.Namespace(**man["params"])
    ns.command = man["command"]
    ns.out_dir = args.out_dir or os.path.dirname(os.path.abspath(args.manifest))
    ns.threads = args.threads
    COMMANDS[ns.command](ns)
    differ = []
    for name, digest in man["outputs"].items():
        if digest is not None and _sha256(os.path.join(ns.out_dir, name)) != digest:
            differ.append(name)
    if differ:
        raise DataError(f"outputs differ from the manifest: {', '.join(differ)}")
    print(f"reproduced {sum(d is not None for d in man['outputs'].values())} outputs bit-exactly")
    return EXIT_OK


COMMANDS = {"lut": cmd_lut, "sweep": cmd_sweep, "scene": cmd_scene, "bench": cmd_bench, "rerun": cmd_rerun}


# ---- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=os.environ.get(OUT_ENV, "."), help=f"output directory (default ${OUT_ENV} or .)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads; results do not depend on it")

    flux = argparse.ArgumentParser(add_help=False)
    flux.add_argument("--condition", choices=sorted(NAMED_CONDITIONS), help="named operating point (sets both fluxes)")
    flux.add_argument("--t-exp", type=exposure, default=1e-4, help="exposure, seconds or with us/ms suffix")
    flux.add_argument("--r-q", type=float, default=0.0, help="dark count rate, 1/s")

    p = argparse.ArgumentParser(prog="spsl", description="Single-photon structured light codes and simulations.")
    p.add_argument("--version", action="version", version=f"spsl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("lut", parents=[common], help="write a codebook LUT file")
    q.add_argument("--strategy", required=True, choices=("gray", "longrun", "repetition", "bch", "shift", "hybrid"))
    q.add_argument("--L", type=int, default=10, help="message bits")
    q.add_argument("--C", type=int, default=None, help="columns (default 2^L)")
    q.add_argument("--r", type=int, default=3, help="repetitions")
    q.add_argument("--base", choices=("gray", "longrun"), default="gray", help="repeated base code")
    q.add_argument("--n", type=int, default=None, help="BCH length before shortening")
    q.add_argument("--d", type=int, default=None, help="BCH design distance")
    q.add_argument("--Lbch", type=int, default=None, help="hybrid: BCH-coded high bits")
    q.add_argument("--Lshift", type=int, default=None, help="hybrid/shift: shift-coded low bits")
    q.add_argument("--name", type=plain_name, default="lut")

    q = sub.add_parser("sweep", parents=[common, flux], help="Monte-Carlo error over a flux grid")
    q.add_argument("--strategies", nargs="*", default=None, help="e.g. gray rep6 bch63 hybrid63 lrrep8")
    q.add_argument("--phi-a", type=float_list, default=None, help="comma list of ambient rates, 1/s")
    q.add_argument("--phi-p", type=float_list, default=None, help="comma list of projector rates, 1/s")
    q.add_argument("--grid", type=int, default=8, help="points per axis of the default grid")
    q.add_argument("--n-iter", type=int, default=100)
    q.add_argument("--metric", choices=("exact", "rmse"), default="exact")
    q.add_argument("--L", type=int, default=10)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--name", type=plain_name, default="sweep")

    q = sub.add_parser("scene", parents=[common, flux], help="render, decode and score a synthetic scene")
    q.add_argument("--kind", required=True, choices=KINDS)
    q.add_argument("--strategy", required=True, help="strategy name as in sweep")
    q.add_argument("--phi-a", type=float, default=None)
    q.add_argument("--phi-p", type=float, default=None)
    q.add_argument("--defocus", type=float, default=0.0, help="Gaussian defocus sigma, projector pixels")
    q.add_argument("--mismatch", type=int, default=1, help="projector columns per camera pixel")
    q.add_argument("--width", type=int, default=640)
    q.add_argument("--height", type=int, default=32)
    q.add_argument("--albedo", type=float, default=1.0)
    q.add_argument("--z0", type=float, default=0.5, help="working depth, m")
    q.add_argument("--f", type=float, default=900.0, help="focal length, pixels")
    q.add_argument("--b", type=float, default=0.14, help="baseline, m")
    q.add_argument("--L", type=int, default=10)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--name", type=plain_name, default="scene")

    q = sub.add_parser("bench", parents=[common], help="time packed vs naive nearest-codeword decoding")
    src = q.add_mutually_exclusive_group()
    src.add_argument("--strategy", default="bch255", help="codebook by strategy name")
    src.add_argument("--lut", help="codebook LUT file")
    q.add_argument("--queries", type=int, default=131072)
    q.add_argument("--reps", type=int, default=3)
    q.add_argument("--check", type=int, default=2048, help="queries cross-checked against the naive engine")
    q.add_argument("--flip-p", type=float, default=0.1)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--name", type=plain_name, default="bench")

    q = sub.add_parser("rerun", help="replay a manifest and verify its outputs")
    q.add_argument("manifest")
    q.add_argument("--out-dir", default=None, help="default: the manifest's directory")
    q.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    if getattr(args, "queries", 1) < 1:
        parser.error("--queries must be >= 1")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"spsl {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CodebookError, gf2_bch.CodeConstructionError, ValueError, OSError) as e:
        print(f"spsl {args.command}: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
