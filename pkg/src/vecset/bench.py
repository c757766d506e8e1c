"""Recall/latency benchmark: datasets, ground truth and the probes sweep."""

from __future__ import annotations

import csv
import io
import logging
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .core import SimParams, VectorSet
from .engine import SetSearchEngine
from .errors import InvalidInputError
from .formats import read_fvecs
from .oracle import ExactSearcher, SearchHit

log = logging.getLogger(__name__)

DATA_DIR_ENV = "VECSET_DATA_DIR"
GLOVE_BASE = "glove_base.fvecs"
GLOVE_TEST = "glove_test.fvecs"
DESK_BASE_VECTORS = 99_999
DESK_TEST_VECTORS = 900


def group_sets(vectors, n: int, start_id: int = 0) -> list[VectorSet]:
    """Consecutive chunks of ``n`` vectors; a trailing partial chunk is dropped."""
    if n < 1:
        raise InvalidInputError(f"set size must be >= 1, got {n}")
    vectors = np.asarray(vectors, dtype=np.float32)
    count = len(vectors) // n
    return [VectorSet(start_id + s, vectors[s * n:(s + 1) * n]) for s in range(count)]


def recall_at_k(found: Sequence[SearchHit], truth: Sequence[SearchHit], k: int) -> float:
    """Fraction of the true top-``k`` ids present among the first ``k`` found."""
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    if len(truth) < k:
        raise InvalidInputError(f"ground truth has {len(truth)} hits, need {k}")
    want = {h.set_id for h in truth[:k]}
    got = {h.set_id for h in found[:k]}
    return len(want & got) / k


def ground_truth(
    database: Sequence[VectorSet] | ExactSearcher,
    queries: Sequence[VectorSet],
    u: int,
    params: SimParams,
    workers: int = 1,
) -> list[list[SearchHit]]:
    searcher = database if isinstance(database, ExactSearcher) else ExactSearcher(database, params)
    if workers <= 1:
        return [searcher.top_u(A, u) for A in queries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda A: searcher.top_u(A, u), queries))


def time_oracle(searcher: ExactSearcher, queries: Sequence[VectorSet], u: int) -> float:
    """Mean single-thread wall time of one exact query, in milliseconds."""
    times = []
    with threadpool_limits(limits=1):
        searcher.top_u(queries[0], u)
        for A in queries:
            t0 = time.perf_counter()
            searcher.top_u(A, u)
            times.append(time.perf_counter() - t0)
    return float(np.mean(times)) * 1e3


@dataclass
class BenchRow:
    k: int
    probes: int
    recall_mean: float
    recall_std: float
    latency_ms_mean: float
    latency_ms_p95: float
    qps: float


CSV_HEADER = tuple(f.name for f in fields(BenchRow))


@dataclass
class BenchResult:
    rows: list[BenchRow]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.k, r.probes] + [repr(float(v)) for v in astuple(r)[2:]])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> BenchResult:
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise InvalidInputError(f"unexpected CSV header {header}")
        rows = []
        for rec in reader:
            if not rec:
                continue
            k, probes, *rest = rec
            rows.append(BenchRow(int(k), int(probes), *(float(v) for v in rest)))
        return cls(rows)

    @classmethod
    def read_csv(cls, path) -> BenchResult:
        return cls.from_csv(Path(path).read_text())

    def best(self, k: int, min_recall: float) -> BenchRow | None:
        """Fastest row for ``k`` whose mean recall reaches ``min_recall``."""
        ok = [r for r in self.rows if r.k == k and r.recall_mean >= min_recall]
        return min(ok, key=lambda r: r.latency_ms_mean, default=None)


def _max_leaves(engine: SetSearchEngine) -> int:
    return max((idx.leaves for idx in engine.grid.values()), default=0)


def run_benchmark(
    engine: SetSearchEngine,
    truth: Sequence[Sequence[SearchHit]],
    queries: Sequence[VectorSet],
    ks: Sequence[int],
    probes_sweep: Sequence[int],
    workers: int = 1,
    rescore: bool | None = None,
    per_target_r: int | None = None,
) -> BenchResult:
    """One row per (k, probes) cell; ground truth and build are not timed."""
    if len(truth) != len(queries):
        raise InvalidInputError("need one ground-truth list per query")
    max_k = max(ks)
    if any(len(t) < max_k for t in truth):
        raise InvalidInputError(f"ground truth must hold at least {max_k} hits per query")
    sweep = []
    leaves = _max_leaves(engine)
    for p in probes_sweep:
        if p < 1:
            raise InvalidInputError(f"probes must be positive, got {p}")
        if engine.backend == "ivf" and p > leaves:
            warnings.warn(f"probes {p} exceeds leaves {leaves}; clamped", stacklevel=2)
            p = leaves
        if p not in sweep:
            sweep.append(p)
    if engine.backend == "flat":
        sweep = sweep[:1]  # probes has no effect on a flat scan
    rows = []
    limit = 1 if workers <= 1 else None
    with threadpool_limits(limits=limit):
        engine.query_top_u(queries[0], u=max_k)  # warm caches
        for k in ks:
            for p in sweep:
                kw = dict(u=k, probes=p, rescore=rescore, per_target_r=per_target_r)
                t0 = time.perf_counter()
                reports = engine.query_batch(queries, workers=workers, **kw)
                wall = time.perf_counter() - t0
                rec = np.array([recall_at_k(r.hits, t, k) for r, t in zip(reports, truth)])
                lat = np.array([r.latency_ms for r in reports])
                rows.append(BenchRow(
                    k, p, float(rec.mean()), float(rec.std()),
                    float(lat.mean()), float(np.percentile(lat, 95)), len(queries) / wall,
                ))
                log.info("k=%d probes=%d recall=%.4f latency=%.3fms", k, p, rows[-1].recall_mean, rows[-1].latency_ms_mean)
    return BenchResult(rows)


# -- datasets -----------------------------------------------------------------


def synthetic_vectors(
    count: int,
    dim: int = 100,
    set_size: int = 3,
    n_topics: int = 200,
    coherence: float = 1.0,
    seed: int = 42,
    stream: int = 0,
) -> np.ndarray:
    """Gaussian-mixture stand-in for word embeddings, as float32 rows.

    Every vector is ``mean + topic center + noise`` with a decaying per-axis
    scale (embedding spectra are far from isotropic) and Zipf-distributed
    topic frequencies.  Consecutive runs of ``set_size`` vectors share one
    topic per member with probability ``coherence``; otherwise the member
    draws its own topic.  ``seed`` fixes the topics, ``stream`` the samples,
    so base and test splits drawn from different streams share topics.
    """
    if not 0.0 <= coherence <= 1.0:
        raise InvalidInputError("coherence must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    scale = np.arange(1, dim + 1) ** -0.5
    mean = 1.5 * scale * rng.standard_normal(dim)
    centers = scale * rng.standard_normal((n_topics, dim))
    freq = 1.0 / np.arange(1, n_topics + 1)
    freq /= freq.sum()

    rng = np.random.default_rng([seed, stream + 1])
    n_sets = -(-count // set_size)
    shared = np.repeat(rng.choice(n_topics, n_sets, p=freq), set_size)[:count]
    own = rng.choice(n_topics, count, p=freq)
    topic = np.where(rng.random(count) < coherence, shared, own)
    noise = 0.5 * scale * rng.standard_normal((count, dim))
    return (mean + centers[topic] + noise).astype(np.float32)


@dataclass
class DeskDataset:
    base: np.ndarray
    test: np.ndarray
    source: str


def desk_dataset(
    data_dir=None,
    base_vectors: int = DESK_BASE_VECTORS,
    test_vectors: int = DESK_TEST_VECTORS,
    seed: int = 42,
    coherence: float = 1.0,
) -> DeskDataset:
    """First ``base_vectors``/``test_vectors`` GloVe rows, or the synthetic fallback.

    GloVe is looked up as ``glove_base.fvecs``/``glove_test.fvecs`` under
    ``data_dir`` (default: ``$VECSET_DATA_DIR``).
    """
    data_dir = data_dir or os.environ.get(DATA_DIR_ENV)
    if data_dir:
        base_path, test_path = Path(data_dir) / GLOVE_BASE, Path(data_dir) / GLOVE_TEST
        if base_path.exists() and test_path.exists():
            base = read_fvecs(base_path)[:base_vectors]
            test = read_fvecs(test_path)[:test_vectors]
            return DeskDataset(base, test, f"glove:{base_path.parent}")
    base = synthetic_vectors(base_vectors, coherence=coherence, seed=seed, stream=0)
    test = synthetic_vectors(test_vectors, coherence=coherence, seed=seed, stream=1)
    return DeskDataset(base, test, f"synthetic:seed={seed},coherence={coherence}")

