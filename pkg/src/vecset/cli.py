"""vecset command line: build, query, oracle, bench, verify, synth.

Exit codes: 0 success, 1 verification/recall or per-query failure, 2 usage
error, 3 I/O or format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import bench
from .core import SimParams, VectorSet
from .encoder import target_matrix
from .engine import SetSearchEngine
from .errors import FormatError, InvalidInputError, UnsupportedCardinalityError
from .formats import read_fvecs, read_ground_truth, read_sets_manifest, sets_from_manifest, write_fvecs, write_ground_truth
from .mips import IvfParams
from .oracle import ExactSearcher
from .verify import corrupted_targets, engine_suite, encoding_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("vecset")


class UsageError(Exception):
    pass


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def nonneg_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value < 0 or value != value:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def int_list(text: str) -> list[int]:
    try:
        values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return values


# -- argument groups ----------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data-dir", default=os.environ.get(bench.DATA_DIR_ENV),
                   help=f"dataset root for relative paths (default ${bench.DATA_DIR_ENV})")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--workers", type=positive_int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")


def _add_sets_source(p: argparse.ArgumentParser, prefix: str, what: str) -> None:
    p.add_argument(f"--{prefix}", metavar="FVECS",
                   help=f"{what} vectors (fvecs); default: the desk-scale dataset")
    p.add_argument(f"--{prefix}-manifest", metavar="JSONL",
                   help="group rows into sets by manifest instead of consecutively")
    p.add_argument("--set-size", type=positive_int, default=3, help="consecutive grouping size N")


def _add_weights(p: argparse.ArgumentParser) -> None:
    p.add_argument("--w-max", type=nonneg_float, default=1.0)
    p.add_argument("--w-avg", type=nonneg_float, default=1.0)


def _add_query_knobs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--probes", type=positive_int, default=None, help="posting lists scanned per target")
    p.add_argument("--per-target-r", type=positive_int, default=None, help="hits kept per target search")
    p.add_argument("--rescore", action=argparse.BooleanOptionalAction, default=None,
                   help="re-rank pooled candidates by exact similarity (default: on for ivf)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vecset", description="Approximate search over sets of vectors.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="encode a set database and persist the index grid")
    _add_common(p)
    _add_sets_source(p, "vectors", "database")
    _add_weights(p)
    p.add_argument("--out", required=True, help="engine directory to write")
    p.add_argument("--max-card", type=positive_int, default=None, help="M (default: largest set)")
    p.add_argument("--target-cards", type=int_list, default=None,
                   help="query cardinalities to materialize (default: those present in the data)")
    p.add_argument("--backend", choices=("flat", "ivf"), default="flat")
    p.add_argument("--leaves", type=positive_int, default=None, help="ivf lists (default round(sqrt(n)))")
    p.add_argument("--probes", type=positive_int, default=1, help="default probes stored with the engine")
    p.add_argument("--kmeans-iters", type=positive_int, default=20)
    p.add_argument("--coherence", type=float, default=1.0, help="synthetic fallback set coherence")

    p = sub.add_parser("query", help="top-u sets for each query set, as JSON lines")
    _add_common(p)
    _add_sets_source(p, "queries", "query")
    p.add_argument("--engine", required=True)
    p.add_argument("-u", "--k", dest="u", type=positive_int, default=10)
    _add_query_knobs(p)

    p = sub.add_parser("oracle", help="exact brute-force ground truth, as JSON lines")
    _add_common(p)
    _add_sets_source(p, "queries", "query")
    p.add_argument("--engine", required=True, help="engine whose catalog is the database")
    p.add_argument("-u", "--k", dest="u", type=positive_int, default=10)
    p.add_argument("--out", default=None, help="ground-truth file (default stdout)")

    p = sub.add_parser("bench", help="recall/latency sweep over probes")
    _add_common(p)
    _add_sets_source(p, "queries", "query")
    p.add_argument("--engine", required=True)
    p.add_argument("--truth", default=None, help="ground-truth file (computed when absent)")
    p.add_argument("--ks", type=int_list, default=[1, 5, 10])
    p.add_argument("--probes-sweep", type=int_list, default=[1, 2, 4, 8, 16])
    p.add_argument("--per-target-r", type=positive_int, default=None)
    p.add_argument("--rescore", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.add_argument("--min-recall", type=float, default=None,
                   help="exit 1 unless some row reaches this recall at the largest k")

    p = sub.add_parser("verify", help="run the seeded correctness property suites")
    _add_common(p)
    p.add_argument("--trials", type=positive_int, default=10_000, help="random (A, V) triples")
    p.add_argument("--engine-trials", type=positive_int, default=20, help="random databases")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)

    p = sub.add_parser("synth", help="write the seeded synthetic desk-scale dataset as fvecs")
    _add_common(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--base", type=positive_int, default=bench.DESK_BASE_VECTORS)
    p.add_argument("--test", type=positive_int, default=bench.DESK_TEST_VECTORS)
    p.add_argument("--dim", type=positive_int, default=100)
    p.add_argument("--coherence", type=float, default=1.0)
    return parser


# -- helpers ------------------------------------------------------------------


def _resolve(path, data_dir) -> Path:
    p = Path(path)
    if not p.is_absolute() and not p.exists() and data_dir:
        return Path(data_dir) / p
    return p


def _load_sets(args, prefix: str, split: str, start_id: int = 0) -> list[VectorSet]:
    path = getattr(args, prefix)
    manifest = getattr(args, f"{prefix}_manifest")
    if path is None:
        if manifest:
            raise UsageError(f"--{prefix}-manifest needs --{prefix}")
        ds = bench.desk_dataset(args.data_dir, seed=args.seed, coherence=getattr(args, "coherence", 1.0))
        log.info("using %s %s split", ds.source, split)
        vectors = ds.base if split == "base" else ds.test
        return bench.group_sets(vectors, args.set_size, start_id)
    vectors = read_fvecs(_resolve(path, args.data_dir))
    if manifest:
        return sets_from_manifest(vectors, read_sets_manifest(_resolve(manifest, args.data_dir)))
    return bench.group_sets(vectors, args.set_size, start_id)


def _hits_json(hits) -> list:
    return [[h.set_id, h.score] for h in hits]


# -- commands -----------------------------------------------------------------


def cmd_build(args) -> int:
    if args.backend == "flat" and args.leaves is not None:
        log.warning("--leaves ignored for the flat backend")
    if args.leaves is not None and args.probes > args.leaves:
        raise UsageError(f"--probes {args.probes} exceeds --leaves {args.leaves}")
    sets = _load_sets(args, "vectors", "base")
    if not sets:
        raise UsageError("no sets to index")
    present = sorted({len(s) for s in sets})
    max_card = args.max_card or max(present + (args.target_cards or []))
    params = SimParams(args.w_max, args.w_avg, sets[0].dim, max_card)
    ivf = IvfParams(args.leaves, args.probes, args.kmeans_iters, args.seed)
    engine = SetSearchEngine(params, args.target_cards or present, args.backend, ivf)
    engine.ingest(sets)
    sizes = engine.seal()
    engine.save(args.out)
    print(f"engine {args.out}: {len(sets)} sets, backend {args.backend}, D={params.dim}, M={max_card}")
    for (n, k), size in sizes.items():
        leaves = engine.grid[(n, k)].leaves
        extra = f", {leaves} leaves" if args.backend == "ivf" else ""
        print(f"  grid ({n},{k}): {size} vectors of dim {n * k * params.dim}{extra}")
    return EXIT_OK


def cmd_query(args) -> int:
    engine = SetSearchEngine.load(_resolve(args.engine, args.data_dir))
    queries = _load_sets(args, "queries", "test")
    status = EXIT_OK
    for q, A in enumerate(queries):
        try:
            report = engine.query_top_u(A, u=args.u, probes=args.probes, rescore=args.rescore,
                                        per_target_r=args.per_target_r)
            rec = {"query": q, "hits": _hits_json(report.hits), "latency_ms": round(report.latency_ms, 4)}
        except (UnsupportedCardinalityError, InvalidInputError) as exc:
            rec = {"query": q, "error": str(exc)}
            status = EXIT_FAIL
        print(json.dumps(rec))
    return status


def cmd_oracle(args) -> int:
    engine = SetSearchEngine.load(_resolve(args.engine, args.data_dir))
    queries = _load_sets(args, "queries", "test")
    searcher = ExactSearcher(engine.catalog.values(), engine.params)
    truth = bench.ground_truth(searcher, queries, args.u, engine.params, args.workers)
    if args.out:
        write_ground_truth(args.out, truth)
    else:
        for q, hits in enumerate(truth):
            print(json.dumps({"query": q, "hits": _hits_json(hits)}))
    return EXIT_OK


def cmd_bench(args) -> int:
    engine = SetSearchEngine.load(_resolve(args.engine, args.data_dir))
    queries = _load_sets(args, "queries", "test")
    searcher = ExactSearcher(engine.catalog.values(), engine.params)
    max_k = max(args.ks)
    if args.truth:
        truth = read_ground_truth(_resolve(args.truth, args.data_dir))
    else:
        truth = bench.ground_truth(searcher, queries, max_k, engine.params, args.workers)
    oracle_ms = bench.time_oracle(searcher, queries, max_k)
    result = bench.run_benchmark(engine, truth, queries, args.ks, args.probes_sweep, args.workers,
                                 args.rescore, args.per_target_r)
    if args.out:
        result.write_csv(args.out)
    else:
        sys.stdout.write(result.to_csv())
    print(f"oracle brute force: {oracle_ms:.3f} ms/query", file=sys.stderr)
    for row in result.rows:
        print(f"k={row.k} probes={row.probes} recall={row.recall_mean:.4f} "
              f"latency={row.latency_ms_mean:.3f}ms speedup={oracle_ms / row.latency_ms_mean:.1f}x",
              file=sys.stderr)
    if args.min_recall is not None and result.best(max_k, args.min_recall) is None:
        print(f"no setting reached recall {args.min_recall} at k={max_k}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_verify(args) -> int:
    encode = corrupted_targets if args.inject_fault else target_matrix
    outcomes = encoding_suite(args.trials, args.seed, encode=encode)
    outcomes += engine_suite(args.engine_trials, args.seed)
    for o in outcomes:
        print(o.line())
    return EXIT_OK if all(o.passed for o in outcomes) else EXIT_FAIL


def cmd_synth(args) -> int:
    if not 0.0 <= args.coherence <= 1.0:
        raise UsageError("--coherence must lie in [0, 1]")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = bench.synthetic_vectors(args.base, args.dim, coherence=args.coherence, seed=args.seed, stream=0)
    test = bench.synthetic_vectors(args.test, args.dim, coherence=args.coherence, seed=args.seed, stream=1)
    write_fvecs(out / "synthetic_base.fvecs", base)
    write_fvecs(out / "synthetic_test.fvecs", test)
    print(f"wrote {len(base)} base and {len(test)} test vectors of dim {args.dim} to {out}")
    return EXIT_OK


COMMANDS = {
    "build": cmd_build,
    "query": cmd_query,
    "oracle": cmd_oracle,
    "bench": cmd_bench,
    "verify": cmd_verify,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"vecset {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidInputError as exc:
        print(f"vecset {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"vecset {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
