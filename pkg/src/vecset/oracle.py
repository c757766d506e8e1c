"""Exact brute-force set search, the ground truth for everything else."""

from __future__ import annotations

from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .core import SimParams, VectorSet, combine
from .errors import ConflictError, InvalidInputError


class SearchHit(NamedTuple):
    set_id: int
    score: float


def rank(ids: np.ndarray, scores: np.ndarray, u: int) -> list[SearchHit]:
    """Top ``u`` by descending score, ties broken by ascending id."""
    ids = np.asarray(ids)
    scores = np.asarray(scores, dtype=np.float64)
    if len(ids) > u:
        # everything tied with the u-th score stays in so the tie-break is exact
        kth = np.partition(scores, len(scores) - u)[len(scores) - u]
        keep = np.flatnonzero(scores >= kth)
        ids, scores = ids[keep], scores[keep]
    order = np.lexsort((ids, -scores))[:u]
    return [SearchHit(int(ids[o]), float(scores[o])) for o in order]


def group_scores(qa: np.ndarray, flat: np.ndarray, card: int, params: SimParams) -> np.ndarray:
    """Scores of one query against ``S`` stored sets of equal cardinality.

    ``qa`` holds the query's unit members (|A|, D); ``flat`` holds the stored
    unit members as (S*card, D), set by set.
    """
    n_sets = flat.shape[0] // card
    ps = qa @ flat.T
    ps = ps.reshape(qa.shape[0], n_sets, card).transpose(1, 0, 2).reshape(n_sets, -1)
    ps = np.clip(ps, -1.0, 1.0)
    return combine(ps.max(axis=1), ps.mean(axis=1), params)


class ExactSearcher:
    """Pre-normalized float64 member tensors grouped by cardinality.

    One query costs one matrix product per cardinality group followed by a
    max/mean reduction, so this is a fair latency baseline rather than a
    pairwise Python loop.
    """

    def __init__(self, database: Iterable[VectorSet], params: SimParams):
        self.params = params
        groups: dict[int, list[VectorSet]] = {}
        seen: set[int] = set()
        for vs in database:
            params.check(vs)
            if vs.id in seen:
                raise ConflictError(f"duplicate set id {vs.id}")
            seen.add(vs.id)
            groups.setdefault(len(vs), []).append(vs)
        if not groups:
            raise InvalidInputError("database is empty")
        self._groups = {}
        for card, sets in sorted(groups.items()):
            ids = np.array([s.id for s in sets], dtype=np.int64)
            members = np.stack([s.normalized() for s in sets])  # (S, card, D)
            flat = np.ascontiguousarray(members.reshape(-1, params.dim))
            self._groups[card] = (ids, flat)
        self.size = len(seen)

    def scores(self, A: VectorSet) -> tuple[np.ndarray, np.ndarray]:
        """Similarity of ``A`` to every stored set, as (ids, scores)."""
        self.params.check(A)
        qa = A.normalized()
        all_ids, all_scores = [], []
        for card, (ids, flat) in self._groups.items():
            all_ids.append(ids)
            all_scores.append(group_scores(qa, flat, card, self.params))
        return np.concatenate(all_ids), np.concatenate(all_scores)

    def top_u(self, A: VectorSet, u: int) -> list[SearchHit]:
        if u < 1:
            raise InvalidInputError(f"u must be >= 1, got {u}")
        ids, scores = self.scores(A)
        return rank(ids, scores, u)


def oracle_top_u(
    A: VectorSet,
    database: Sequence[VectorSet] | ExactSearcher,
    u: int,
    params: SimParams,
) -> list[SearchHit]:
    """The ``u`` stored sets most similar to ``A``; all of them if ``u`` is larger."""
    if not isinstance(database, ExactSearcher):
        database = ExactSearcher(database, params)
    return database.top_u(A, u)
