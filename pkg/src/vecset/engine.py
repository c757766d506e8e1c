"""Set search over a grid of MIPS indexes, one per (n, k) shape.

Index ``(n, k)`` holds the long candidate vectors of every stored set of
cardinality ``k``, encoded for a query cardinality of ``n``.  A query of
cardinality ``|A|`` issues ``|A| * k`` target vectors against each
``(|A|, k)`` index, pools the winners and ranks them.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import SimParams, VectorSet
from .encoder import candidate_matrix, target_matrix
from .errors import ConflictError, FormatError, InvalidInputError, UnsupportedCardinalityError
from .formats import read_catalog, write_catalog
from .mips import IvfParams, MipsIndex, ivf_from_arrays
from .oracle import SearchHit, group_scores, rank

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
FORMAT_TAG = "vecset-engine/1"


@dataclass
class QueryReport:
    hits: list[SearchHit]
    probes_used: int = 0
    targets_issued: int = 0
    candidates_scored: int = 0
    latency_ms: float = 0.0


@dataclass
class BuildSummary:
    inserted: dict[tuple[int, int], int] = field(default_factory=dict)
    sets: int = 0


def _pool_max(ids: np.ndarray, scores: np.ndarray):
    """Best score per distinct id, ids ascending."""
    order = np.lexsort((-scores, ids))
    ids, scores = ids[order], scores[order]
    first = np.ones(len(ids), dtype=bool)
    first[1:] = ids[1:] != ids[:-1]
    return ids[first], scores[first]


class SetSearchEngine:
    def __init__(
        self,
        params: SimParams,
        target_cards: Iterable[int] | None = None,
        backend: str = "flat",
        ivf: IvfParams | None = None,
    ):
        if backend not in ("flat", "ivf"):
            raise InvalidInputError(f"unknown backend {backend!r}")
        cards = range(1, params.max_card + 1) if target_cards is None else target_cards
        cards = sorted(set(int(c) for c in cards))
        if not cards or cards[0] < 1 or cards[-1] > params.max_card:
            raise InvalidInputError(f"target cardinalities must lie in [1, {params.max_card}]")
        self.params = params
        self.backend = backend
        self.ivf = ivf or IvfParams()
        self.target_cards = tuple(cards)
        self.catalog: dict[int, VectorSet] = {}
        self.grid: dict[tuple[int, int], MipsIndex] = {}
        self._pending: dict[int, list[VectorSet]] = {}
        self._members: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self.sealed = False

    @property
    def candidate_cards(self) -> tuple[int, ...]:
        return tuple(sorted(self._pending))

    # -- build ----------------------------------------------------------------

    def ingest(self, sets: Iterable[VectorSet]) -> BuildSummary:
        """Stage sets for indexing; encodings are materialized at :meth:`seal`."""
        if self.sealed:
            raise ConflictError("engine is sealed; online insertion is not supported")
        sets = list(sets)
        if not sets:
            raise InvalidInputError("ingest needs at least one set")
        batch_ids: set[int] = set()
        for vs in sets:
            self.params.check(vs)
            if vs.id in self.catalog or vs.id in batch_ids:
                raise ConflictError(f"duplicate set id {vs.id}")
            batch_ids.add(vs.id)
        summary = BuildSummary(sets=len(sets))
        for vs in sets:
            self.catalog[vs.id] = vs
            self._pending.setdefault(len(vs), []).append(vs)
            for n in self.target_cards:
                key = (n, len(vs))
                summary.inserted[key] = summary.inserted.get(key, 0) + 1
        return summary

    def seal(self) -> dict[tuple[int, int], int]:
        """Encode every staged set and build the grid; returns index sizes."""
        if self.sealed:
            raise ConflictError("engine is already sealed")
        if not self.catalog:
            raise InvalidInputError("cannot seal an empty engine")
        for k, sets in sorted(self._pending.items()):
            ids = np.array([vs.id for vs in sets], dtype=np.int64)
            for n in self.target_cards:
                data = candidate_matrix(sets, n, self.params)
                self.grid[(n, k)] = self._build_index((n, k, self.params.dim), ids, data)
            self._index_members(k, sets)
        self.sealed = True
        return {key: idx.size for key, idx in sorted(self.grid.items())}

    def _build_index(self, shape, ids, data) -> MipsIndex:
        if self.backend == "flat":
            return MipsIndex(shape, "flat", ids, data)
        leaves = min(self.ivf.leaves_for(len(ids)), len(ids))
        params = IvfParams(leaves, min(self.ivf.probes, leaves), self.ivf.kmeans_iters, self.ivf.seed)
        t0 = time.perf_counter()
        index = ivf_from_arrays(shape, ids, data, params)
        log.info("built ivf %s: %d entries, %d leaves in %.1fs", shape, len(ids), leaves, time.perf_counter() - t0)
        return index

    def _index_members(self, k: int, sets: Sequence[VectorSet]) -> None:
        ids = np.array([vs.id for vs in sets], dtype=np.int64)
        flat = np.concatenate([vs.normalized() for vs in sets])
        order = np.argsort(ids)
        self._members[k] = (ids, flat, ids[order], order)

    # -- query ----------------------------------------------------------------

    def exact_scores(self, A: VectorSet, set_ids: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
        """Exact similarity of ``A`` to the given catalog sets."""
        want = np.unique(np.fromiter(set_ids, dtype=np.int64))
        qa = A.normalized()
        ids_out, scores_out = [np.zeros(0, dtype=np.int64)], [np.zeros(0)]
        found = 0
        for k, (ids, flat, sorted_ids, order) in sorted(self._members.items()):
            pos = np.searchsorted(sorted_ids, want).clip(max=len(ids) - 1)
            rows = np.sort(order[pos[sorted_ids[pos] == want]])
            if not len(rows):
                continue
            found += len(rows)
            sel = flat.reshape(len(ids), k, -1)[rows].reshape(-1, flat.shape[1])
            ids_out.append(ids[rows])
            scores_out.append(group_scores(qa, sel, k, self.params))
        if found != len(want):
            raise InvalidInputError(f"{len(want) - found} set ids are not in the catalog")
        return np.concatenate(ids_out), np.concatenate(scores_out)

    def query_top_u(
        self,
        A: VectorSet,
        u: int = 10,
        probes: int | None = None,
        rescore: bool | None = None,
        per_target_r: int | None = None,
    ) -> QueryReport:
        if not self.sealed:
            raise InvalidInputError("engine must be sealed before querying")
        if u < 1:
            raise InvalidInputError(f"u must be positive, got {u}")
        probes = self.ivf.probes if probes is None else probes
        rescore = self.backend == "ivf" if rescore is None else rescore
        per_target_r = max(u, 10) if per_target_r is None else per_target_r
        if probes < 1 or per_target_r < 1:
            raise InvalidInputError("probes and per_target_r must be positive")
        self.params.check(A)
        a_card = len(A)
        if a_card not in self.target_cards:
            raise UnsupportedCardinalityError(
                f"query cardinality {a_card} not materialized (have {list(self.target_cards)})"
            )
        t0 = time.perf_counter()
        report = QueryReport(hits=[])
        found_ids, found_scores = [], []
        for k in self.candidate_cards:
            index = self.grid[(a_card, k)]
            targets = target_matrix(A, k, self.params)
            report.targets_issued += len(targets)
            if index.variant == "ivf":
                report.probes_used = max(report.probes_used, min(probes, index.leaves))
            _, ids, scores, scanned = index.search_hits(targets, per_target_r, probes)
            report.candidates_scored += int(scanned.sum())
            found_ids.append(ids)
            found_scores.append(scores)
        ids, scores = _pool_max(np.concatenate(found_ids), np.concatenate(found_scores))
        if rescore:
            ids, scores = self.exact_scores(A, ids)
        report.hits = rank(ids, scores, u)
        report.latency_ms = (time.perf_counter() - t0) * 1e3
        return report

    def query_batch(self, queries: Sequence[VectorSet], workers: int = 1, **kw) -> list[QueryReport]:
        """Run many queries; results come back in input order for any worker count."""
        if workers <= 1:
            return [self.query_top_u(A, **kw) for A in queries]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda A: self.query_top_u(A, **kw), queries))

    # -- persistence ----------------------------------------------------------

    def save(self, directory) -> Path:
        if not self.sealed:
            raise InvalidInputError("only sealed engines can be saved")
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        indexes = []
        for (n, k), index in sorted(self.grid.items()):
            name = f"index_n{n}_k{k}.vslv"
            index.save(out / name)
            indexes.append({"n": n, "k": k, "file": name, "size": index.size, "leaves": index.leaves})
        write_catalog(out / "catalog.fvecs", out / "catalog.jsonl", (self.catalog[i] for i in sorted(self.catalog)))
        manifest = {
            "format": FORMAT_TAG,
            "params": {
                "w_max": self.params.w_max,
                "w_avg": self.params.w_avg,
                "dim": self.params.dim,
                "max_card": self.params.max_card,
            },
            "backend": self.backend,
            "ivf": {
                "leaves": self.ivf.leaves,
                "probes": self.ivf.probes,
                "kmeans_iters": self.ivf.kmeans_iters,
                "seed": self.ivf.seed,
            },
            "target_cards": list(self.target_cards),
            "candidate_cards": list(self.candidate_cards),
            "indexes": indexes,
            "catalog": {"vectors": "catalog.fvecs", "sets": "catalog.jsonl"},
        }
        (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
        return out / MANIFEST

    @classmethod
    def load(cls, directory) -> SetSearchEngine:
        root = Path(directory)
        try:
            manifest = json.loads((root / MANIFEST).read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{root / MANIFEST}: {exc}") from None
        if manifest.get("format") != FORMAT_TAG:
            raise FormatError(f"{root / MANIFEST}: unknown format {manifest.get('format')!r}")
        engine = cls(
            SimParams(**manifest["params"]),
            manifest["target_cards"],
            manifest["backend"],
            IvfParams(**manifest["ivf"]),
        )
        cat = manifest["catalog"]
        engine.ingest(read_catalog(root / cat["vectors"], root / cat["sets"]))
        for entry in manifest["indexes"]:
            index = MipsIndex.load(root / entry["file"])
            if index.shape != (entry["n"], entry["k"], engine.params.dim):
                raise FormatError(f"{entry['file']}: shape {index.shape} disagrees with manifest")
            engine.grid[(entry["n"], entry["k"])] = index
        expected = {(n, k) for n in engine.target_cards for k in engine.candidate_cards}
        if set(engine.grid) != expected:
            raise FormatError(f"{root}: manifest grid does not match catalog cardinalities")
        for k, sets in sorted(engine._pending.items()):
            engine._index_members(k, sets)
        engine.sealed = True
        return engine
