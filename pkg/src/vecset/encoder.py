"""Long-vector encodings of vector sets.

A long vector is a flat buffer of ``n * k`` blocks of dimension D.  Stored
(candidate) sets are encoded so that each member appears ``n`` times, once
per member of a query set of cardinality ``n``; query (target) sets are
encoded as the concatenation of their members repeated ``k`` times.  With
those layouts, block ``p`` of a candidate and block ``p`` of a target hold
one (query member, stored member) pair, so a single inner product sums over
every pair.

Block addressing (all indices 0-based):

* candidate ``L_V^n``: copy ``t`` of member ``j`` sits at block ``j*n + t``
* target base ``L_A^k``: copy ``c`` of member ``i`` sits at block ``c*|A| + i``
* the pair (a_i, v_j) meets at block ``j*|A| + i``
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import SimParams, VectorSet
from .errors import InvalidInputError

KINDS = ("candidate", "target", "selector")


@dataclass(frozen=True, eq=False)
class LongVector:
    data: np.ndarray
    n: int
    k: int
    dim: int
    kind: str = "candidate"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown long-vector kind {self.kind!r}")
        if self.data.shape != (self.n * self.k * self.dim,):
            raise InvalidInputError(
                f"data length {self.data.shape} does not match shape {self.shape}"
            )

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.k, self.dim)

    def blocks(self) -> np.ndarray:
        """View of the buffer as (n*k, D)."""
        return self.data.reshape(self.n * self.k, self.dim)


def block_of_candidate(j: int, t: int, n: int) -> int:
    return j * n + t


def block_of_target(c: int, i: int, a_card: int) -> int:
    return c * a_card + i


def _check_card(name: str, value: int, params: SimParams) -> None:
    if not 1 <= value <= params.max_card:
        raise InvalidInputError(f"{name}={value} outside [1, {params.max_card}]")


def _unit_members(vs: VectorSet, params: SimParams) -> np.ndarray:
    params.check(vs)
    return vs.normalized()


def encode_candidate(V: VectorSet, n: int, params: SimParams) -> LongVector:
    """``n`` consecutive copies of each normalized member of ``V``."""
    _check_card("n", n, params)
    unit = _unit_members(V, params)
    data = np.repeat(unit, n, axis=0).reshape(-1)
    return LongVector(data, n, len(V), params.dim, "candidate")


def encode_target_base(A: VectorSet, k: int, params: SimParams) -> LongVector:
    """Normalized members of ``A`` concatenated, the whole run repeated ``k`` times."""
    _check_card("k", k, params)
    unit = _unit_members(A, params)
    data = np.tile(unit, (k, 1)).reshape(-1)
    return LongVector(data, len(A), k, params.dim, "target")


def selector(i: int, j: int, a_card: int, k: int, dim: int) -> LongVector:
    """All-zeros long vector with an all-ones block where (a_i, v_j) meet."""
    if a_card < 1 or k < 1 or dim < 1:
        raise InvalidInputError("a_card, k and dim must be positive")
    if not (0 <= i < a_card and 0 <= j < k):
        raise InvalidInputError(f"pair ({i}, {j}) outside [0, {a_card}) x [0, {k})")
    data = np.zeros(a_card * k * dim)
    off = block_of_target(j, i, a_card) * dim
    data[off:off + dim] = 1.0
    return LongVector(data, a_card, k, dim, "selector")


def hadamard(x: LongVector, y: LongVector) -> LongVector:
    """Element-wise product; the result keeps the kind of the non-selector side."""
    _check_same_shape(x, y)
    kind = y.kind if x.kind == "selector" else x.kind
    return LongVector(x.data * y.data, x.n, x.k, x.dim, kind)


def target_matrix(A: VectorSet, k: int, params: SimParams) -> np.ndarray:
    """All ``|A|*k`` target vectors for candidate cardinality ``k`` as rows.

    Row ``j*|A| + i`` assumes (a_i, v_j) is the best pair.  Each row is
    ``(w_max * (sigma_ij . L_A) + w_avg/(|A| k) * L_A) / (w_max + w_avg)``.
    """
    base = encode_target_base(A, k, params)
    a_card, d = len(A), params.dim
    m = a_card * k
    rows = np.tile(base.data * (params.w_avg / (m * params.w_total)), (m, 1))
    blocks = rows.reshape(m, m, d)
    unit = base.blocks()
    # row p gets the max-weighted copy of its own block p
    blocks[np.arange(m), np.arange(m)] += unit * (params.w_max / params.w_total)
    return rows


def encode_targets(A: VectorSet, k: int, params: SimParams) -> list[tuple[int, int, LongVector]]:
    """``(i, j, tau_ij)`` for every assumed best pair, j-major order."""
    rows = target_matrix(A, k, params)
    a_card = len(A)
    out = []
    for p, row in enumerate(rows):
        j, i = divmod(p, a_card)
        out.append((i, j, LongVector(row, a_card, k, params.dim, "target")))
    return out


def _check_same_shape(x: LongVector, y: LongVector) -> None:
    if x.shape != y.shape:
        raise InvalidInputError(f"shape mismatch: {x.shape} vs {y.shape}")


def dot(x: LongVector, y: LongVector) -> float:
    _check_same_shape(x, y)
    return float(np.dot(x.data, y.data))


def candidate_matrix(sets: Sequence[VectorSet], n: int, params: SimParams) -> np.ndarray:
    """``encode_candidate(V, n)`` for many equal-cardinality sets, as float32 rows."""
    _check_card("n", n, params)
    card = len(sets[0])
    unit = np.empty((len(sets), card, params.dim), dtype=np.float32)
    for r, vs in enumerate(sets):
        if len(vs) != card:
            raise InvalidInputError(f"set {vs.id}: cardinality {len(vs)} != {card}")
        unit[r] = _unit_members(vs, params)
    return np.repeat(unit, n, axis=1).reshape(len(sets), -1)
