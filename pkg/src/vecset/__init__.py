"""Approximate top-k search over sets of vectors via long-vector MIPS."""

from .core import SimParams, VectorSet, cosine, pairwise_sims, set_similarity
from .encoder import LongVector, dot, encode_candidate, encode_target_base, encode_targets, selector
from .engine import QueryReport, SetSearchEngine
from .errors import (
    ConflictError,
    DegenerateVectorError,
    FormatError,
    InvalidInputError,
    UnsupportedCardinalityError,
    VecSetError,
)
from .mips import IvfParams, MipsIndex, build_flat, build_ivf
from .oracle import ExactSearcher, SearchHit, oracle_top_u

__all__ = [
    "ConflictError",
    "DegenerateVectorError",
    "ExactSearcher",
    "FormatError",
    "InvalidInputError",
    "IvfParams",
    "LongVector",
    "MipsIndex",
    "QueryReport",
    "SearchHit",
    "SetSearchEngine",
    "SimParams",
    "UnsupportedCardinalityError",
    "VecSetError",
    "VectorSet",
    "build_flat",
    "build_ivf",
    "cosine",
    "dot",
    "encode_candidate",
    "encode_target_base",
    "encode_targets",
    "oracle_top_u",
    "pairwise_sims",
    "selector",
    "set_similarity",
]

__version__ = "0.1.0"
