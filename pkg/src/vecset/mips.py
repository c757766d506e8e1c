"""Maximum-inner-product search over equal-shape long vectors.

Two variants share one class: ``flat`` scans every stored vector, ``ivf``
partitions the vectors with k-means and scans only the posting lists whose
centroids score highest against the query.

Scores are first computed with float32 BLAS, which is fast but whose last
bits depend on how the data happens to be sliced.  Every entry that could
reach the top ``r`` under the float32 rounding bound is then re-scored in
float64 with a fixed summation order, and the final ranking uses those
values.  That makes an IVF search that probes every list return exactly the
flat result.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from math import sqrt
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoder import LongVector
from .errors import FormatError, InvalidInputError
from .oracle import SearchHit

log = logging.getLogger(__name__)

MAGIC = b"VSLV1"
_HEADER = struct.Struct("<6i")
VARIANTS = ("flat", "ivf")
_U32 = 2.0 ** -24
_ASSIGN_CHUNK = 8192


@dataclass(frozen=True)
class IvfParams:
    leaves: int | None = None  # None: round(sqrt(entries))
    probes: int = 1
    kmeans_iters: int = 20
    seed: int = 42

    def __post_init__(self):
        if self.leaves is not None and self.leaves < 1:
            raise InvalidInputError(f"leaves must be positive, got {self.leaves}")
        if self.probes < 1:
            raise InvalidInputError(f"probes must be positive, got {self.probes}")
        if self.leaves is not None and self.probes > self.leaves:
            raise InvalidInputError(f"probes {self.probes} exceeds leaves {self.leaves}")
        if self.kmeans_iters < 1:
            raise InvalidInputError("kmeans_iters must be positive")

    def leaves_for(self, n_entries: int) -> int:
        if self.leaves is not None:
            return self.leaves
        return max(1, min(n_entries, round(sqrt(n_entries))))


# -- k-means ------------------------------------------------------------------


def assign(data: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Index of the nearest centroid (Euclidean) for every row; ties go low."""
    c_sq = np.einsum("ij,ij->i", centroids, centroids)
    labels = np.empty(len(data), dtype=np.int64)
    for a in range(0, len(data), _ASSIGN_CHUNK):
        block = data[a:a + _ASSIGN_CHUNK]
        # ||x||^2 is constant per row and does not affect the argmin
        dist = c_sq[None, :] - 2.0 * (block @ centroids.T)
        labels[a:a + len(block)] = np.argmin(dist, axis=1)
    return labels


def _kmeans_pp(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(data)
    x_sq = np.einsum("ij,ij->i", data, data).astype(np.float64)
    chosen = [int(rng.integers(n))]
    d2 = np.full(n, np.inf)
    for _ in range(1, k):
        c = data[chosen[-1]]
        dist = x_sq - 2.0 * (data @ c).astype(np.float64) + float(c @ c)
        d2 = np.minimum(d2, np.maximum(dist, 0.0))
        d2[chosen] = 0.0
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with a chosen one
            rest = np.setdiff1d(np.arange(n), chosen)
            chosen.append(int(rng.choice(rest)))
        else:
            chosen.append(int(rng.choice(n, p=d2 / total)))
    return data[chosen].copy()


def kmeans(data: np.ndarray, k: int, iters: int = 20, seed: int = 42):
    """Lloyd iterations from a k-means++ start; returns (centroids, labels).

    Empty clusters keep their previous centroid.  ``labels`` is the final
    nearest-centroid assignment against the returned centroids.
    """
    if not 1 <= k <= len(data):
        raise InvalidInputError(f"k={k} must lie in [1, {len(data)}]")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(data, k, rng)
    labels = None
    for _ in range(iters):
        new = assign(data, centroids)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        order = np.argsort(labels, kind="stable")
        counts = np.bincount(labels, minlength=k)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        nonempty = counts > 0
        sums = np.add.reduceat(data[order].astype(np.float64), starts[nonempty], axis=0)
        centroids[nonempty] = (sums / counts[nonempty, None]).astype(np.float32)
    return centroids, assign(data, centroids)


# -- index --------------------------------------------------------------------


class MipsIndex:
    """Immutable store of long vectors of one (n, k, D) shape.

    Entries are kept contiguously grouped by posting list (a flat index is
    a single list in insertion order), so scanning a list is a slice.
    """

    def __init__(self, shape, variant, ids, data, centroids=None, list_sizes=None):
        if variant not in VARIANTS:
            raise InvalidInputError(f"unknown variant {variant!r}")
        self.n, self.k, self.dim = (int(s) for s in shape)
        self.variant = variant
        self.ids = np.ascontiguousarray(ids, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float32)
        if self.data.shape != (len(self.ids), self.width):
            raise InvalidInputError(f"data shape {self.data.shape} does not fit {self.shape}")
        if variant == "flat":
            self.centroids = np.zeros((0, self.width), dtype=np.float32)
            list_sizes = [len(self.ids)]
        else:
            self.centroids = np.ascontiguousarray(centroids, dtype=np.float32)
        sizes = np.asarray(list_sizes, dtype=np.int64)
        if sizes.sum() != len(self.ids):
            raise InvalidInputError("posting list sizes do not cover all entries")
        self.offsets = np.concatenate(([0], np.cumsum(sizes)))
        sizes = np.diff(self.offsets)
        self._live = np.flatnonzero(sizes)
        # empty posting lists are never probed
        self._live_centroids = self.centroids[self._live] if variant == "ivf" else self.centroids
        self._max_norm = float(np.sqrt(np.einsum("ij,ij->i", self.data, self.data).max(initial=0.0)))
        for arr in (self.ids, self.data, self.centroids, self.offsets):
            arr.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.k, self.dim)

    @property
    def width(self) -> int:
        return self.n * self.k * self.dim

    @property
    def size(self) -> int:
        return len(self.ids)

    @property
    def leaves(self) -> int:
        return len(self.centroids) if self.variant == "ivf" else 0

    def __len__(self) -> int:
        return self.size

    def posting_list(self, leaf: int) -> np.ndarray:
        """Set ids stored in one posting list (the whole index when flat)."""
        return self.ids[self.offsets[leaf]:self.offsets[leaf + 1]]

    def labels(self) -> np.ndarray:
        """Posting list of each entry in storage order."""
        return np.repeat(np.arange(len(self.offsets) - 1), np.diff(self.offsets))

    # -- search ---------------------------------------------------------------

    def search(self, query: LongVector, top_r: int, probes: int = 1) -> list[SearchHit]:
        if query.shape != self.shape:
            raise InvalidInputError(f"query shape {query.shape} != index shape {self.shape}")
        _, ids, scores, _ = self.search_hits(query.data[None, :], top_r, probes)
        return [SearchHit(int(i), float(s)) for i, s in zip(ids, scores)]

    def search_many(self, queries: np.ndarray, top_r: int, probes: int = 1):
        """Search several query rows at once.

        Returns one ``(ids, scores, scanned)`` triple per query: hits sorted
        by descending score then ascending id, and the number of stored
        vectors whose inner product was evaluated for that query.
        """
        col, ids, scores, scanned = self.search_hits(queries, top_r, probes)
        bounds = np.searchsorted(col, np.arange(len(scanned) + 1))
        return [
            (ids[a:b], scores[a:b], int(scanned[c]))
            for c, (a, b) in enumerate(zip(bounds[:-1], bounds[1:]))
        ]

    def search_hits(self, queries: np.ndarray, top_r: int, probes: int = 1):
        """Flat form of :meth:`search_many`.

        Returns ``(query_row, ids, scores, scanned)`` where the first three
        are parallel arrays ordered by query row, then rank.
        """
        q64 = np.asarray(queries, dtype=np.float64)
        if q64.ndim != 2 or q64.shape[1] != self.width:
            raise InvalidInputError(f"queries must be (m, {self.width}), got {q64.shape}")
        if top_r < 1:
            raise InvalidInputError(f"top_r must be positive, got {top_r}")
        if probes < 1:
            raise InvalidInputError(f"probes must be positive, got {probes}")
        q32 = q64.astype(np.float32)
        if self.variant == "flat":
            rows = np.arange(self.size)
            approx = q32 @ self.data.T
            scanned = np.full(len(q64), self.size)
        else:
            rows, approx, scanned = self._scan_probed(q32, probes)
        return self._refine(rows, approx, scanned, q64, top_r) + (scanned,)

    def _scan_probed(self, q32: np.ndarray, probes: int):
        sizes = np.diff(self.offsets)
        live = self._live
        p = min(probes, len(live))
        cscore = q32 @ self._live_centroids.T
        if p < len(live):
            # everything above the p-th score, then ties by lowest list number;
            # this keeps the probed lists nested as probes grows
            kth = -np.partition(-cscore, p - 1, axis=1)[:, p - 1:p]
            above = cscore > kth
            tied = cscore == kth
            room = p - above.sum(axis=1, keepdims=True)
            probed = above | (tied & (np.cumsum(tied, axis=1) <= room))
        else:
            probed = np.ones((len(q32), len(live)), dtype=bool)
        used = np.flatnonzero(probed.any(axis=0))
        starts, ends = self.offsets[live[used]], self.offsets[live[used] + 1]
        approx = np.full((len(q32), int((ends - starts).sum())), -np.inf, dtype=np.float32)
        pos = 0
        for li, a, b in zip(used, starts, ends):
            # only the queries that chose this list pay for scanning it
            who = np.flatnonzero(probed[:, li])
            approx[who, pos:pos + b - a] = q32[who] @ self.data[a:b].T
            pos += b - a
        rows = np.concatenate([np.arange(a, b) for a, b in zip(starts, ends)])
        scanned = probed.astype(np.int64) @ sizes[live]
        return rows, approx, scanned

    def _refine(self, rows, approx, scanned, q64, top_r):
        """Exact float64 re-ranking of every entry that may be in a top ``r``.

        ``approx`` is (m, len(rows)) float32 with ``-inf`` for entries a query
        did not scan.  The shortlist per query keeps all entries within twice
        the float32 dot-product error bound of its ``r``-th best score.
        """
        m, width = approx.shape
        if width > top_r:
            # selecting a small index is much faster than a large one here
            kth = -np.partition(-approx, top_r - 1, axis=1)[:, top_r - 1].astype(np.float64)
        else:
            kth = np.zeros(m)
        bound = 2.0 * (self.width + 2) * _U32 * np.linalg.norm(q64, axis=1) * self._max_norm
        # with fewer than top_r scanned entries, keep everything that was scanned
        floor = np.where(scanned > top_r, kth - 2.0 * bound, np.finfo(np.float32).min)
        col, r_idx = np.nonzero(approx >= floor[:, None])
        entry = rows[r_idx]
        exact = np.multiply(self.data[entry], q64[col], dtype=np.float64).sum(axis=1)
        ids = self.ids[entry]
        order = np.lexsort((ids, -exact, col))
        col, ids, exact = col[order], ids[order], exact[order]
        # rank within each query, keep the first top_r
        first = np.searchsorted(col, col, side="left")
        sel = (np.arange(len(col)) - first) < top_r
        return col[sel], ids[sel], exact[sel]

    # -- persistence ----------------------------------------------------------

    def _entry_dtype(self):
        return np.dtype([("id", "<i8"), ("v", "<f4", (self.width,))])

    def save(self, path) -> None:
        """Header, centroids, entries (id + floats) in list order, then list sizes."""
        variant = VARIANTS.index(self.variant)
        entries = np.empty(self.size, dtype=self._entry_dtype())
        entries["id"] = self.ids
        entries["v"] = self.data
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(_HEADER.pack(self.n, self.k, self.dim, variant, self.size, self.leaves))
            f.write(self.centroids.astype("<f4").tobytes())
            f.write(entries.tobytes())
            if self.variant == "ivf":
                f.write(np.diff(self.offsets).astype("<i4").tobytes())

    @classmethod
    def load(cls, path) -> MipsIndex:
        raw = Path(path).read_bytes()
        if raw[:len(MAGIC)] != MAGIC:
            raise FormatError(f"{path}: bad magic")
        pos = len(MAGIC)
        if len(raw) < pos + _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        n, k, dim, variant, count, leaves = _HEADER.unpack_from(raw, pos)
        pos += _HEADER.size
        if min(n, k, dim) < 1 or count < 0 or leaves < 0 or variant not in (0, 1):
            raise FormatError(f"{path}: invalid header values")
        width = n * k * dim
        entry_dtype = np.dtype([("id", "<i8"), ("v", "<f4", (width,))])
        need = pos + leaves * width * 4 + count * entry_dtype.itemsize
        need += leaves * 4 if variant == 1 else 0
        if len(raw) != need:
            raise FormatError(f"{path}: expected {need} bytes, found {len(raw)}")
        centroids = np.frombuffer(raw, "<f4", leaves * width, pos).reshape(leaves, width)
        pos += centroids.nbytes
        entries = np.frombuffer(raw, entry_dtype, count, pos)
        pos += entries.nbytes
        sizes = None
        if variant == 1:
            sizes = np.frombuffer(raw, "<i4", leaves, pos)
            if sizes.min(initial=0) < 0 or sizes.sum() != count:
                raise FormatError(f"{path}: posting list sizes do not add up")
        return cls((n, k, dim), VARIANTS[variant], entries["id"], entries["v"], centroids, sizes)


# -- builders -----------------------------------------------------------------


def _stack(entries: Sequence[tuple[int, LongVector]]):
    if not entries:
        raise InvalidInputError("cannot build an index from zero entries")
    shape = entries[0][1].shape
    for sid, lv in entries:
        if lv.shape != shape:
            raise InvalidInputError(f"entry {sid}: shape {lv.shape} != {shape}")
    ids = np.array([sid for sid, _ in entries], dtype=np.int64)
    data = np.stack([lv.data for _, lv in entries]).astype(np.float32)
    return shape, ids, data


def build_flat(entries: Sequence[tuple[int, LongVector]]) -> MipsIndex:
    shape, ids, data = _stack(entries)
    return MipsIndex(shape, "flat", ids, data)


def build_ivf(entries: Sequence[tuple[int, LongVector]], params: IvfParams) -> MipsIndex:
    shape, ids, data = _stack(entries)
    return ivf_from_arrays(shape, ids, data, params)


def ivf_from_arrays(shape, ids: np.ndarray, data: np.ndarray, params: IvfParams) -> MipsIndex:
    """IVF build from already stacked (ids, float32 rows)."""
    if len(ids) == 0:
        raise InvalidInputError("cannot build an index from zero entries")
    leaves = params.leaves_for(len(ids))
    if leaves > len(ids):
        raise InvalidInputError(f"leaves {leaves} exceeds entry count {len(ids)}")
    data = np.ascontiguousarray(data, dtype=np.float32)
    centroids, labels = kmeans(data, leaves, params.kmeans_iters, params.seed)
    order = np.argsort(labels, kind="stable")
    sizes = np.bincount(labels, minlength=leaves)
    log.debug("ivf %s: %d entries, %d leaves, %d empty", shape, len(ids), leaves, int((sizes == 0).sum()))
    return MipsIndex(shape, "ivf", ids[order], data[order], centroids, sizes)
