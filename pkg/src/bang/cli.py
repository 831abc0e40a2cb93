"""Command-line surface: build, compress, gt, search and bench subcommands.

Every run with identical flags and seed produces identical artifacts; the
timing columns of reports are the only non-deterministic outputs.  Exit codes
categorize failures: 2 parameter errors, 3 format errors, 4 I/O errors,
1 anything else.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import bench as bench_mod
from .engine import GraphSearcher
from .errors import FileFormatError, ParameterError, TruncatedFileError
from .graph import VamanaBuilder
from .io import (infer_format, read_codebook, read_codes, read_graph,
                 read_vectors, write_codebook, write_codes, write_graph,
                 write_ground_truth, write_ivecs)
from .metrics import brute_force_knn, write_run_report
from .pq import ProductQuantizer, compress_with_codebook

log = logging.getLogger("bang")


def _resolve_threads(value: int | None) -> int:
    if value is not None:
        return max(1, value)
    env = os.environ.get("BANG_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _read_store(path: str, fmt: str | None):
    return read_vectors(path, fmt or infer_format(path))


def cmd_build(args) -> int:
    base = _read_store(args.base, args.format)
    builder = VamanaBuilder(degree_bound=args.R, build_worklist=args.L,
                            sigma=args.sigma, seed=args.seed)
    graph = builder.fit(base.data).graph_
    write_graph(graph, args.out)
    histogram = np.bincount(graph.degrees, minlength=graph.degree_bound + 1)
    print(f"medoid: {graph.medoid}")
    print("degree histogram:")
    for degree in np.flatnonzero(histogram):
        print(f"  {int(degree)}: {int(histogram[degree])}")
    return 0


def cmd_compress(args) -> int:
    base = _read_store(args.base, args.format)
    pq = ProductQuantizer(m=args.m, iters=args.iters, seed=args.seed).fit(base.data)
    codes = compress_with_codebook(base.data, pq.codebook_)
    write_codebook(pq.codebook_, args.out_codebook)
    write_codes(codes, args.out_codes)
    log.info("wrote codebook to %s and %d codes to %s",
             args.out_codebook, codes.count, args.out_codes)
    return 0


def cmd_gt(args) -> int:
    base = _read_store(args.base, args.format)
    queries = _read_store(args.queries, args.format)
    gt = brute_force_knn(base, queries, args.k, threads=args.threads)
    write_ground_truth(gt, args.out)
    log.info("wrote %d x %d ground truth to %s", gt.query_count, gt.k_gt, args.out)
    return 0


def cmd_search(args) -> int:
    if args.mode != "exact_distance" and not (args.codebook and args.codes):
        raise ParameterError(f"mode {args.mode} requires --codebook and --codes")
    graph = read_graph(args.graph)
    base = _read_store(args.base, args.format)
    queries = _read_store(args.queries, args.format)
    codebook = read_codebook(args.codebook) if args.codebook else None
    codes = read_codes(args.codes) if args.codes else None
    if args.mode == "exact_distance":
        codebook = codes = None
    searcher = GraphSearcher(k=args.k, t=args.t, mode=args.mode,
                             bloom_entries=args.bloom_entries,
                             batch_size=args.batch, rerank=not args.no_rerank,
                             seed=args.seed, threads=args.threads)
    searcher.fit(base.data, graph=graph, codebook=codebook, codes=codes)
    result = searcher.search(queries.data)
    write_ivecs(result.ids, args.out)
    if args.report:
        write_run_report(result, args.report)
    log.info("searched %d queries in %.3fs", queries.count, result.elapsed)
    return 0


def cmd_bench(args) -> int:
    config = bench_mod.parse_config(args.config)
    rows = bench_mod.bench_sweep(config, threads=args.threads)
    bench_mod.write_csv(rows, args.out)
    log.info("wrote %d sweep rows to %s", len(rows), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bang",
        description="graph-based ANN search over product-quantized vectors")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: BANG_THREADS or all cores)")
    common.add_argument("--verbose", action="store_true")
    common.add_argument("--format", choices=["fvecs", "bvecs", "raw_bin"],
                        default=None, help="vector file format (default: by extension)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", parents=[common], help="build a graph index")
    p.add_argument("--base", required=True)
    p.add_argument("--R", type=int, default=64, help="degree bound")
    p.add_argument("--L", type=int, default=200, help="build worklist size")
    p.add_argument("--sigma", type=float, default=1.2, help="pruning slack")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("compress", parents=[common],
                       help="train a codebook and compress the base set")
    p.add_argument("--base", required=True)
    p.add_argument("--m", type=int, default=74, help="subspace count")
    p.add_argument("--iters", type=int, default=25)
    p.add_argument("--out-codebook", required=True)
    p.add_argument("--out-codes", required=True)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("gt", parents=[common], help="exact ground truth")
    p.add_argument("--base", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gt)

    p = sub.add_parser("search", parents=[common], help="batched graph search")
    p.add_argument("--graph", required=True)
    p.add_argument("--codes")
    p.add_argument("--codebook")
    p.add_argument("--base", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--t", type=int, default=152, help="worklist size (>= k)")
    p.add_argument("--mode", choices=["pipelined", "in_memory", "exact_distance"],
                   default="pipelined")
    p.add_argument("--bloom-entries", type=int, default=399_887)
    p.add_argument("--batch", type=int, default=10_000)
    p.add_argument("--no-rerank", action="store_true",
                   help="emit worklist order instead of exact re-ranked order")
    p.add_argument("--out", required=True, help="result ids, ivecs")
    p.add_argument("--report", help="per-query CSV run report")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("bench", parents=[common], help="parameter sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    args.threads = _resolve_threads(args.threads)
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return 2
    except FileFormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 3
    except (TruncatedFileError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
