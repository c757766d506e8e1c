"""Domain types and the exact set-to-set similarity measure.

Everything else in the package (long-vector encodings, the MIPS grid, the
benchmark) is checked against the functions in this module.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DegenerateVectorError, InvalidInputError

NORM_EPS = 1e-12


@dataclass(frozen=True)
class SimParams:
    """Weights of the max/avg balance plus the engine-wide bounds.

    ``dim`` is the member dimension D and ``max_card`` the largest set
    cardinality M the engine accepts.
    """

    w_max: float = 1.0
    w_avg: float = 1.0
    dim: int = 100
    max_card: int = 3

    def __post_init__(self):
        if self.w_max < 0 or self.w_avg < 0:
            raise InvalidInputError("weights must be nonnegative")
        if self.w_max + self.w_avg <= 0:
            raise InvalidInputError("w_max + w_avg must be positive")
        if self.dim < 1:
            raise InvalidInputError(f"dim must be positive, got {self.dim}")
        if self.max_card < 1:
            raise InvalidInputError(f"max_card must be positive, got {self.max_card}")

    @property
    def w_total(self) -> float:
        return self.w_max + self.w_avg

    def check(self, vs: VectorSet) -> None:
        """Raise unless ``vs`` fits this engine's dimension and cardinality bound."""
        if vs.dim != self.dim:
            raise InvalidInputError(f"set {vs.id}: dimension {vs.dim} != {self.dim}")
        if len(vs) > self.max_card:
            raise InvalidInputError(
                f"set {vs.id}: cardinality {len(vs)} exceeds max_card {self.max_card}"
            )


def _as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError(f"expected a nonempty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("vector has non-finite components")
    return arr


def _norm(v: np.ndarray) -> float:
    n = float(np.linalg.norm(v))
    if n <= NORM_EPS:
        raise DegenerateVectorError(f"vector norm {n:.3g} is at or below {NORM_EPS}")
    return n


class VectorSet:
    """An identified, ordered set of 1..M member vectors.

    Members are stored unnormalized as float32; normalization happens
    wherever a cosine is taken.
    """

    __slots__ = ("id", "members")

    def __init__(self, id: int, members):
        arr = np.asarray(members, dtype=np.float32)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise InvalidInputError(f"set {id}: members must be a nonempty (m, D) array")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError(f"set {id}: non-finite member components")
        norms = np.linalg.norm(arr.astype(np.float64), axis=1)
        if np.any(norms <= NORM_EPS):
            bad = int(np.argmin(norms))
            raise DegenerateVectorError(f"set {id}: member {bad} has norm {norms[bad]:.3g}")
        arr.setflags(write=False)
        self.id = int(id)
        self.members = arr

    def __len__(self) -> int:
        return self.members.shape[0]

    @property
    def dim(self) -> int:
        return self.members.shape[1]

    def normalized(self) -> np.ndarray:
        """Unit-norm members as a float64 (m, D) array."""
        m = self.members.astype(np.float64)
        return m / np.linalg.norm(m, axis=1, keepdims=True)

    def __eq__(self, other):
        if not isinstance(other, VectorSet):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.members, other.members)

    def __hash__(self):
        return hash(self.id)

    def __repr__(self):
        return f"VectorSet(id={self.id}, card={len(self)}, dim={self.dim})"


def cosine(a, b) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1]."""
    a = _as_vector(a)
    b = _as_vector(b)
    if a.shape != b.shape:
        raise InvalidInputError(f"dimension mismatch: {a.size} vs {b.size}")
    c = float(np.dot(a, b)) / (_norm(a) * _norm(b))
    return min(1.0, max(-1.0, c))


def pairwise_sims(A: VectorSet, V: VectorSet) -> np.ndarray:
    """Matrix ``ps[i, j] = cosine(a_i, v_j)`` of shape (|A|, |V|)."""
    if A.dim != V.dim:
        raise InvalidInputError(f"dimension mismatch: {A.dim} vs {V.dim}")
    ps = A.normalized() @ V.normalized().T
    return np.clip(ps, -1.0, 1.0)


def combine(max_ps, avg_ps, params: SimParams):
    """Weighted balance of the best pair and the mean pair.

    Works on scalars or arrays; the oracle calls it on whole score vectors.
    """
    return (params.w_max * max_ps + params.w_avg * avg_ps) / params.w_total


def set_similarity(A: VectorSet, V: VectorSet, params: SimParams) -> float:
    ps = pairwise_sims(A, V)
    return float(combine(ps.max(), ps.mean(), params))


def make_sets(groups: Iterable, start_id: int = 0) -> list[VectorSet]:
    """Wrap an iterable of member arrays into sets with sequential ids."""
    return [VectorSet(start_id + i, g) for i, g in enumerate(groups)]
