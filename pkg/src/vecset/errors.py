"""Exception hierarchy shared by every vecset module."""


class VecSetError(Exception):
    """Base class for all library errors."""


class InvalidInputError(VecSetError, ValueError):
    """Malformed arguments: wrong dimension, bad index, empty collection."""


class DegenerateVectorError(InvalidInputError):
    """A vector whose norm is too small for cosine similarity to be defined."""


class ConflictError(VecSetError):
    """Duplicate identifiers or a state transition that already happened."""


class UnsupportedCardinalityError(VecSetError):
    """Query cardinality has no materialized search structures."""


class FormatError(VecSetError):
    """A file on disk does not follow the expected binary or text layout."""
