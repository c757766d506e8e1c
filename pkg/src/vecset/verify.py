"""Seeded property suites for the long-vector reduction.

Each suite draws random instances from per-trial seeds and reports the
first counterexample seed, so a failure can be replayed exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import SimParams, VectorSet, pairwise_sims, set_similarity
from .encoder import encode_candidate, target_matrix
from .engine import SetSearchEngine
from .oracle import ExactSearcher

TOL = 1e-5
DIMS = (2, 8, 32)

TargetEncoder = Callable[[VectorSet, int, SimParams], np.ndarray]


@dataclass
class PropertyOutcome:
    name: str
    checked: int
    violations: int
    counterexample_seed: int | None = None
    worst: float = 0.0

    def fail(self, seed: int, count: int = 1) -> None:
        self.violations += count
        if self.counterexample_seed is None:
            self.counterexample_seed = seed

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        tail = "" if self.passed else f" (first counterexample seed {self.counterexample_seed})"
        return f"{status} {self.name}: {self.checked} checks, {self.violations} violations, worst {self.worst:.2e}{tail}"


def random_set(rng: np.random.Generator, sid: int, card: int, dim: int) -> VectorSet:
    while True:
        m = rng.standard_normal((card, dim))
        if np.all(np.linalg.norm(m, axis=1) > 1e-3):
            return VectorSet(sid, m)


def random_weights(rng: np.random.Generator) -> tuple[float, float]:
    choice = rng.integers(6)
    if choice == 0:
        return 1.0, 0.0
    if choice == 1:
        return 0.0, 1.0
    return float(rng.uniform(0.01, 2.0)), float(rng.uniform(0.01, 2.0))


def encoding_suite(
    trials: int = 10_000,
    seed: int = 0,
    max_card: int = 4,
    encode: TargetEncoder = target_matrix,
) -> list[PropertyOutcome]:
    """Lower bound, equality at the best pair, and the per-pair target identity."""
    lower = PropertyOutcome("lower bound sim >= tau.L", 0, 0)
    equal = PropertyOutcome("equality sim == tau.L at best pairs", 0, 0)
    ident = PropertyOutcome("target identity", 0, 0)
    for t in range(trials):
        tseed = seed * 1_000_003 + t
        rng = np.random.default_rng(tseed)
        dim = int(rng.choice(DIMS))
        w_max, w_avg = random_weights(rng)
        params = SimParams(w_max, w_avg, dim, max_card)
        A = random_set(rng, 0, int(rng.integers(1, max_card + 1)), dim)
        V = random_set(rng, 1, int(rng.integers(1, max_card + 1)), dim)
        dots = encode(A, len(V), params) @ encode_candidate(V, len(A), params).data
        sim = set_similarity(A, V, params)
        ps = pairwise_sims(A, V)
        # row j*|A| + i assumes pair (i, j)
        expected = (w_max * ps.T.reshape(-1) + w_avg * ps.mean()) / (w_max + w_avg)
        best = np.flatnonzero(ps.T.reshape(-1) == ps.max())
        checks = (
            (lower, np.maximum(dots - sim, 0.0), len(dots)),
            (equal, np.abs(dots[best] - sim), len(best)),
            (ident, np.abs(dots - expected), len(dots)),
        )
        for outcome, err, n in checks:
            outcome.checked += n
            bad = int((err > TOL).sum())
            outcome.worst = max(outcome.worst, float(err.max(initial=0.0)))
            if bad:
                outcome.fail(tseed, bad)
    return [lower, equal, ident]


def _random_database(rng, n_sets, dim, max_card):
    return [random_set(rng, sid, int(rng.integers(1, max_card + 1)), dim) for sid in range(n_sets)]


def engine_suite(
    trials: int = 20,
    seed: int = 0,
    n_sets: int = 60,
    dim: int = 8,
    max_card: int = 4,
    u: int = 5,
) -> list[PropertyOutcome]:
    """Top-1 with one hit per target, and full top-u with rescoring, against the oracle."""
    top1 = PropertyOutcome("top-1 with one hit per target equals oracle", 0, 0)
    topu = PropertyOutcome(f"top-{u} with rescore equals oracle", 0, 0)
    for t in range(trials):
        tseed = seed * 1_000_003 + t
        rng = np.random.default_rng(tseed)
        params = SimParams(*random_weights(rng), dim, max_card)
        db = _random_database(rng, n_sets, dim, max_card)
        engine = SetSearchEngine(params, backend="flat")
        engine.ingest(db)
        engine.seal()
        oracle = ExactSearcher(db, params)
        for q in range(5):
            A = random_set(rng, 10_000 + q, int(rng.integers(1, max_card + 1)), dim)
            truth = oracle.top_u(A, u)
            got1 = engine.query_top_u(A, u=1, per_target_r=1, rescore=False).hits[0]
            err = abs(set_similarity(A, engine.catalog[got1.set_id], params) - truth[0].score)
            err = max(err, abs(got1.score - truth[0].score))
            top1.checked += 1
            top1.worst = max(top1.worst, err)
            if err > TOL:
                top1.fail(tseed)
            got = engine.query_top_u(A, u=u, per_target_r=u, rescore=True).hits
            scores = np.array([h.score for h in truth])
            if np.any(np.abs(np.diff(scores)) < 1e-9):
                continue  # order of near-ties is not meaningful
            topu.checked += 1
            same = [h.set_id for h in got] == [h.set_id for h in truth]
            err = float(np.max(np.abs(scores - [h.score for h in got]))) if same else np.inf
            topu.worst = max(topu.worst, err)
            if not same or err > TOL:
                topu.fail(tseed)
    return [top1, topu]


def corrupted_targets(A: VectorSet, k: int, params: SimParams) -> np.ndarray:
    """Target encoder with a shrunken max term; used to check the suites can fail."""
    rows = target_matrix(A, k, params)
    base = target_matrix(A, k, SimParams(0.0, 1.0, params.dim, params.max_card))
    return 0.9 * rows + 0.1 * base * (params.w_avg / params.w_total)
