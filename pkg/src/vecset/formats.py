"""On-disk formats: fvecs vectors, set manifests and ground-truth files.

fvecs is a sequence of records, each a little-endian int32 dimension ``d``
followed by ``d`` little-endian float32 values.  Manifests and ground truth
are newline-delimited JSON.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import VectorSet
from .errors import FormatError
from .oracle import SearchHit


def read_fvecs(path) -> np.ndarray:
    """All records of an fvecs file as a float32 (count, d) array."""
    raw = Path(path).read_bytes()
    if not raw:
        return np.zeros((0, 0), dtype=np.float32)
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated record header")
    d = int(np.frombuffer(raw, "<i4", 1)[0])
    if d <= 0:
        raise FormatError(f"{path}: record 0 declares dimension {d}")
    rec = 4 * (d + 1)
    if len(raw) % rec:
        # locate the first bad record for a useful message
        _scan_records(path, raw, d)
        raise FormatError(f"{path}: size {len(raw)} is not a multiple of record size {rec}")
    table = np.frombuffer(raw, "<i4").reshape(-1, d + 1)
    dims = table[:, 0]
    if np.any(dims != d):
        bad = int(np.flatnonzero(dims != d)[0])
        raise FormatError(f"{path}: record {bad} has dimension {int(dims[bad])}, expected {d}")
    return table[:, 1:].view("<f4").astype(np.float32)


def _scan_records(path, raw: bytes, d: int) -> None:
    pos, idx = 0, 0
    while pos < len(raw):
        if pos + 4 > len(raw):
            raise FormatError(f"{path}: record {idx} truncated in its header")
        di = int(np.frombuffer(raw, "<i4", 1, pos)[0])
        if di != d:
            raise FormatError(f"{path}: record {idx} has dimension {di}, expected {d}")
        if pos + 4 + 4 * di > len(raw):
            raise FormatError(f"{path}: record {idx} truncated ({d} floats declared)")
        pos += 4 + 4 * di
        idx += 1


def write_fvecs(path, vectors) -> None:
    arr = np.asarray(vectors, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("write_fvecs expects a 2-d array")
    table = np.empty((arr.shape[0], arr.shape[1] + 1), dtype="<i4")
    table[:, 0] = arr.shape[1]
    table[:, 1:] = arr.view("<i4")
    Path(path).write_bytes(table.tobytes())


def read_sets_manifest(path) -> list[tuple[int, list[int]]]:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append((int(rec["id"]), [int(r) for r in rec["rows"]]))
            except (ValueError, KeyError, TypeError) as exc:
                raise FormatError(f"{path}:{lineno}: bad manifest line ({exc})") from None
    return out


def write_sets_manifest(path, entries: Iterable[tuple[int, Sequence[int]]]) -> None:
    with open(path, "w") as f:
        for sid, rows in entries:
            f.write(json.dumps({"id": int(sid), "rows": [int(r) for r in rows]}) + "\n")


def sets_from_manifest(vectors: np.ndarray, manifest) -> list[VectorSet]:
    sets = []
    for sid, rows in manifest:
        if not rows or min(rows) < 0 or max(rows) >= len(vectors):
            raise FormatError(f"set {sid}: row indices out of range [0, {len(vectors)})")
        sets.append(VectorSet(sid, vectors[rows]))
    return sets


def write_catalog(vec_path, manifest_path, sets: Iterable[VectorSet]) -> None:
    """Members of every set into one fvecs file plus a manifest pointing at them."""
    blocks, entries, row = [], [], 0
    for vs in sets:
        blocks.append(vs.members)
        entries.append((vs.id, range(row, row + len(vs))))
        row += len(vs)
    write_fvecs(vec_path, np.concatenate(blocks))
    write_sets_manifest(manifest_path, entries)


def read_catalog(vec_path, manifest_path) -> list[VectorSet]:
    return sets_from_manifest(read_fvecs(vec_path), read_sets_manifest(manifest_path))


def write_ground_truth(path, truth: Sequence[Sequence[SearchHit]]) -> None:
    with open(path, "w") as f:
        for q, hits in enumerate(truth):
            f.write(json.dumps({"query": q, "hits": [[h.set_id, h.score] for h in hits]}) + "\n")


def read_ground_truth(path) -> list[list[SearchHit]]:
    truth: dict[int, list[SearchHit]] = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                truth[int(rec["query"])] = [SearchHit(int(i), float(s)) for i, s in rec["hits"]]
            except (ValueError, KeyError, TypeError) as exc:
                raise FormatError(f"{path}:{lineno}: bad ground-truth line ({exc})") from None
    if sorted(truth) != list(range(len(truth))):
        raise FormatError(f"{path}: query numbers are not 0..{len(truth) - 1}")
    return [truth[q] for q in range(len(truth))]
