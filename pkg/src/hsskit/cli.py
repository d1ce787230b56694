"""Command line interface: ``hsskit compress | verify | bench-scaling``.

Reports are JSON lines (one object per run); scaling tables are CSV.
Exit status is 0 on success, 1 on a compression or file error and 2 on a
usage error.
"""
import argparse
import csv
import json
import math
import sys
import time

import numpy as np

from .compress import CompressionConfig, compress_nonsymmetric, compress_symmetric
from .exceptions import HssError, InvalidInputError
from .factorization import HssFactorization
from .ops import apply, stats, to_dense
from .orthonormalize import orthonormalize, orthonormalize_nonsymmetric
from .source import (
    KERNELS,
    KernelSpec,
    dense_accessor,
    kernel_accessor,
    load_dense_text,
    synthetic_hss_accessor,
)

VERIFY_LIMIT = 4096
BENCH_SCHEMA = "hsskit-scaling-v1"
BENCH_COLUMNS = [
    "schema",
    "n",
    "rank",
    "sample_width",
    "levels",
    "sampling_s",
    "sweep_s",
    "assembly_s",
    "sweep_ratio",
    "matvec",
    "rmatvec",
    "entry",
    "entry_per_n",
    "flops",
]


class UsageError(Exception):
    pass


def _add_source_args(p):
    g = p.add_argument_group("matrix source (choose one)")
    g.add_argument("--kernel", choices=sorted(KERNELS), help="1-D kernel on a uniform grid")
    g.add_argument("--dense-file", metavar="PATH", help="text file: 'rows cols' then entries")
    g.add_argument("--synthetic-rank", type=int, metavar="INT", help="random exact-rank HSS matrix")
    g.add_argument("--n", type=int, metavar="INT", help="dimension for --kernel/--synthetic-rank")
    g.add_argument("--source-seed", type=int, default=0, help="seed of the synthetic matrix")
    g.add_argument("--nonsymmetric", action="store_true",
                   help="use the non-symmetric path (and a non-symmetric synthetic matrix)")


def build_source(args):
    chosen = [x is not None for x in (args.kernel, args.dense_file, args.synthetic_rank)]
    if sum(chosen) != 1:
        raise UsageError("give exactly one of --kernel, --dense-file, --synthetic-rank")
    if args.dense_file is not None:
        return dense_accessor(load_dense_text(args.dense_file))
    if args.n is None:
        raise UsageError("--n is required with --kernel and --synthetic-rank")
    if args.kernel is not None:
        return kernel_accessor(KernelSpec.uniform(args.kernel, args.n))
    leaf = args.max_leaf
    levels = round(math.log2(args.n / leaf)) if args.n >= leaf else -1
    if levels < 0 or leaf * 2**levels != args.n:
        raise UsageError("--synthetic-rank needs --n equal to --max-leaf times a power of two")
    acc, _ = synthetic_hss_accessor(
        args.synthetic_rank, levels, leaf, args.source_seed, symmetric=not args.nonsymmetric
    )
    return acc


def _relative_error(f, acc):
    if acc.n > VERIFY_LIMIT:
        return None
    A = acc.materialize()
    return float(np.linalg.norm(to_dense(f) - A) / max(np.linalg.norm(A), np.finfo(float).tiny))


def _apply_checks(f, acc, count=20, seed=0):
    """Worst relative discrepancy of the fast apply against the dense oracle."""
    A = acc.materialize()
    rng = np.random.default_rng(seed)
    scale = np.linalg.norm(A)
    worst = 0.0
    for _ in range(count):
        x = rng.standard_normal(acc.n)
        worst = max(worst, np.linalg.norm(apply(f, x) - A @ x) / (scale * np.linalg.norm(x)))
    return float(worst)


def _emit(record, path):
    line = json.dumps(record, sort_keys=True)
    if path:
        with open(path, "a") as fh:
            fh.write(line + "\n")
    print(line)


def run_compression(acc, cfg, nonsymmetric=False, ortho=False):
    """Compress and collect a report record (without error columns)."""
    before = acc.counters.snapshot()
    timings = {}
    if nonsymmetric or not acc.symmetric:
        f = compress_nonsymmetric(acc, cfg, timings)
    else:
        f = compress_symmetric(acc, cfg, timings)
    if ortho:
        start = time.perf_counter()
        f = orthonormalize(f) if f.symmetric else orthonormalize_nonsymmetric(f)
        timings["orthonormalize"] = time.perf_counter() - start
    after = acc.counters.snapshot()
    st = stats(f)
    record = {
        "n": acc.n,
        "mode": "rank" if cfg.fixed_rank else "tol",
        "rank": cfg.rank,
        "eps": cfg.tol,
        "relative": cfg.relative,
        "l": cfg.sample_width,
        "seed": cfg.seed,
        "symmetric": f.symmetric,
        "form": f.form,
        "timings": timings,
        "counters": {k: after[k] - before[k] for k in after},
        "matvec_count": after["matvec"] - before["matvec"],
        "rmatvec_count": after["rmatvec"] - before["rmatvec"],
        "entry_count": after["entry"] - before["entry"],
        "max_rank": st["max_rank"],
        "compression_ratio": st["compression_ratio"],
    }
    return f, record


def cmd_compress(args):
    acc = build_source(args)
    if (args.rank is None) == (args.eps is None):
        raise UsageError("give exactly one of --rank and --eps")
    cfg = CompressionConfig(
        rank=args.rank,
        tol=args.eps,
        oversampling=args.oversampling,
        max_rank=args.max_rank,
        relative=args.tol_mode == "relative",
        seed=args.seed,
        max_leaf=args.max_leaf,
    )
    f, record = run_compression(acc, cfg, args.nonsymmetric, args.orthonormalize)
    if args.out:
        f.save(args.out)
        record["out"] = args.out
    record["rel_error"] = None if args.no_verify else _relative_error(f, acc)
    _emit(record, args.report)
    return 0


def cmd_verify(args):
    f = HssFactorization.load(args.file)
    acc = build_source(args)
    if acc.n != f.n:
        raise InvalidInputError(f"factorization has N = {f.n} but the source has N = {acc.n}")
    if acc.n > VERIFY_LIMIT:
        raise InvalidInputError(f"N = {acc.n} exceeds the verification limit {VERIFY_LIMIT}")
    record = {
        "file": args.file,
        "n": f.n,
        "form": f.form,
        "symmetric": f.symmetric,
        "rel_error": _relative_error(f, acc),
        "apply_rel_error": _apply_checks(f, acc, seed=args.seed),
    }
    _emit(record, args.report)
    return 0


def bench_scaling(sizes, rank, max_leaf, seed=0, repeats=5, oversampling=10):
    """Compression timings and counters on synthetic HSS matrices of growing N.

    Each phase time is the minimum over ``repeats`` runs, after one untimed
    warm-up compression.
    """
    rows = []
    prev = None
    warm, _ = synthetic_hss_accessor(rank, 1, max_leaf, seed)
    compress_symmetric(warm, CompressionConfig(rank=rank, seed=seed, max_leaf=max_leaf))
    for n in sizes:
        levels = round(math.log2(n / max_leaf))
        if max_leaf * 2**levels != n:
            raise InvalidInputError(f"size {n} is not max_leaf times a power of two")
        acc, _ = synthetic_hss_accessor(rank, levels, max_leaf, seed)
        cfg = CompressionConfig(rank=rank, oversampling=oversampling, seed=seed, max_leaf=max_leaf)
        best = {}
        for _ in range(repeats):
            before = acc.counters.snapshot()
            timings = {}
            compress_symmetric(acc, cfg, timings)
            after = acc.counters.snapshot()
            for phase, t in timings.items():
                best[phase] = min(best.get(phase, math.inf), t)
        delta = {k: after[k] - before[k] for k in after}
        rows.append({
            "schema": BENCH_SCHEMA,
            "n": n,
            "rank": rank,
            "sample_width": cfg.sample_width,
            "levels": levels,
            "sampling_s": best["sampling"],
            "sweep_s": best["sweep"],
            "assembly_s": best["assembly"],
            "sweep_ratio": best["sweep"] / prev if prev else "",
            "matvec": delta["matvec"],
            "rmatvec": delta["rmatvec"],
            "entry": delta["entry"],
            "entry_per_n": delta["entry"] / n,
            "flops": delta["flops"],
        })
        prev = best["sweep"]
    return rows


def write_csv(rows, fh):
    writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)


def cmd_bench_scaling(args):
    sizes = [int(s) for s in args.sizes.split(",")]
    rows = bench_scaling(sizes, args.synthetic_rank, args.max_leaf, args.seed, args.repeats,
                         args.oversampling)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_csv(rows, fh)
    else:
        write_csv(rows, sys.stdout)
    return 0


def make_parser():
    parser = argparse.ArgumentParser(prog="hsskit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress a matrix into an HSSF file")
    _add_source_args(p)
    p.add_argument("--rank", type=int, help="fixed HSS rank")
    p.add_argument("--eps", type=float, help="tolerance for each local ID")
    p.add_argument("--tol-mode", choices=["relative", "absolute"], default="relative")
    p.add_argument("--oversampling", type=int, default=10)
    p.add_argument("--max-rank", type=int, default=40, help="rank budget in --eps mode")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-leaf", type=int, default=64)
    p.add_argument("--orthonormalize", action="store_true")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--report", metavar="PATH", help="append the JSON report line here")
    p.add_argument("--no-verify", action="store_true", help="skip the dense error check")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("verify", help="check an HSSF file against its source matrix")
    p.add_argument("file")
    _add_source_args(p)
    p.add_argument("--max-leaf", type=int, default=64, help="leaf size of a synthetic source")
    p.add_argument("--seed", type=int, default=0, help="seed of the random apply probes")
    p.add_argument("--report", metavar="PATH")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench-scaling", help="timing/counter table over N")
    p.add_argument("--sizes", default="512,1024,2048,4096")
    p.add_argument("--synthetic-rank", type=int, default=4)
    p.add_argument("--max-leaf", type=int, default=32)
    p.add_argument("--oversampling", type=int, default=10)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="PATH", help="CSV destination (default stdout)")
    p.set_defaults(func=cmd_bench_scaling)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (HssError, OSError) as exc:
        print(f"hsskit: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
