"""Embedding persistence and the vector math shared by the whole pipeline.

EMB1 file layout (little-endian throughout):

    magic "EMB1" (4 bytes) | u32 dim | u64 count
    then `count` records of: u16 id_len | id (UTF-8) | dim * f32

Records are sorted ascending by id byte sequence. For valid UTF-8 that order
equals Python's code-point string order, so in-memory iteration and on-disk
order agree. Vectors are stored as raw float32; all reductions (means, dot
products) accumulate in float64.

Modality travels in the filename: ``*.audio.emb`` / ``*.face.emb``.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import (
    BadMagicError,
    DimensionMismatchError,
    DuplicateIdError,
    EmptyInputError,
    InvariantViolationError,
    TruncatedFileError,
    ZeroMeanError,
    ZeroVectorError,
)

MAGIC = b"EMB1"
MODALITIES = ("audio", "face")
_HEADER = struct.Struct("<4sIQ")
_ID_LEN = struct.Struct("<H")
ZERO_NORM_TOL = 1e-12


class EmbeddingTable:
    """Immutable id-keyed table of fixed-dimension float32 vectors.

    Iteration order is ascending lexicographic by id; that ordering is the
    determinism anchor for everything built on top of the table.
    """

    def __init__(
        self,
        dim: int,
        entries: Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]],
        modality: str = "audio",
    ):
        if not isinstance(dim, int) or dim <= 0:
            raise InvariantViolationError("<table>", f"dim must be a positive integer, got {dim!r}")
        if modality not in MODALITIES:
            raise InvariantViolationError("<table>", f"modality must be one of {MODALITIES}")
        pairs = list(entries.items()) if isinstance(entries, Mapping) else list(entries)
        ids = [p[0] for p in pairs]
        if len(set(ids)) != len(ids):
            raise DuplicateIdError("duplicate ids in embedding table")
        order = sorted(range(len(pairs)), key=lambda i: ids[i])
        self._ids: tuple[str, ...] = tuple(ids[i] for i in order)
        matrix = np.empty((len(pairs), dim), dtype=np.float32)
        for row, i in enumerate(order):
            vec = np.asarray(pairs[i][1], dtype=np.float32)
            if vec.ndim != 1 or vec.shape[0] != dim:
                raise DimensionMismatchError(
                    f"vector {ids[i]!r} has shape {vec.shape}, expected ({dim},)"
                )
            matrix[row] = vec
        if matrix.size and not np.isfinite(matrix).all():
            bad = self._ids[int(np.argwhere(~np.isfinite(matrix))[0][0])]
            raise InvariantViolationError(bad, "vector has non-finite components")
        matrix.flags.writeable = False
        self._matrix = matrix
        self._row = {utt_id: i for i, utt_id in enumerate(self._ids)}
        self.dim = dim
        self.modality = modality

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, utt_id: str) -> bool:
        return utt_id in self._row

    def __getitem__(self, utt_id: str) -> np.ndarray:
        return self._matrix[self._row[utt_id]]

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def matrix(self) -> np.ndarray:
        """(n, dim) float32 view in ascending-id row order; read-only."""
        return self._matrix

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        for utt_id in self._ids:
            yield utt_id, self._matrix[self._row[utt_id]]

    def subset(self, ids: Iterable[str]) -> "EmbeddingTable":
        return EmbeddingTable(self.dim, [(i, self[i]) for i in ids], self.modality)


def modality_from_path(path: str | Path) -> str:
    name = Path(path).name
    if name.endswith(".face.emb"):
        return "face"
    return "audio"


def write_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    """Serialize a table to EMB1, entries in ascending id order."""
    if table.matrix.size and not np.isfinite(table.matrix).all():
        raise InvariantViolationError("<table>", "vector has non-finite components")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, table.dim, len(table)))
        for utt_id, vec in table.items():
            encoded = utt_id.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise InvariantViolationError(utt_id, "id longer than 65535 UTF-8 bytes")
            fh.write(_ID_LEN.pack(len(encoded)))
            fh.write(encoded)
            fh.write(vec.astype("<f4", copy=False).tobytes())


def read_embeddings(path: str | Path, modality: str | None = None) -> EmbeddingTable:
    """Read an EMB1 file; bit-exact inverse of :func:`write_embeddings`."""
    path = Path(path)
    if modality is None:
        modality = modality_from_path(path)

    def take(fh, n: int, what: str) -> bytes:
        buf = fh.read(n)
        if len(buf) != n:
            raise TruncatedFileError(f"{path}: truncated while reading {what}")
        return buf

    with path.open("rb") as fh:
        magic, dim, count = _HEADER.unpack(take(fh, _HEADER.size, "header"))
        if magic != MAGIC:
            raise BadMagicError(f"{path}: magic {magic!r} != {MAGIC!r}")
        entries: list[tuple[str, np.ndarray]] = []
        seen: set[str] = set()
        for _ in range(count):
            (id_len,) = _ID_LEN.unpack(take(fh, _ID_LEN.size, "id length"))
            utt_id = take(fh, id_len, "id").decode("utf-8")
            if utt_id in seen:
                raise DuplicateIdError(f"{path}: duplicate id {utt_id!r}")
            seen.add(utt_id)
            vec = np.frombuffer(take(fh, 4 * dim, f"vector of {utt_id!r}"), dtype="<f4")
            entries.append((utt_id, vec))
        if fh.read(1):
            raise TruncatedFileError(f"{path}: trailing bytes after {count} records")
    return EmbeddingTable(dim, entries, modality)


# --- vector math ----------------------------------------------------------------

def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two nonzero vectors, clamped to [-1, 1]."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise DimensionMismatchError(f"shapes {va.shape} and {vb.shape} do not match")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na < ZERO_NORM_TOL or nb < ZERO_NORM_TOL:
        raise ZeroVectorError("cosine similarity undefined for zero-norm vectors")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


def centroid(vectors: Iterable[np.ndarray]) -> np.ndarray:
    """Arithmetic mean of the vectors, L2-normalized to unit norm (float64)."""
    stack = [np.asarray(v, dtype=np.float64) for v in vectors]
    if not stack:
        raise EmptyInputError("centroid of an empty vector list")
    dims = {v.shape for v in stack}
    if len(dims) != 1:
        raise DimensionMismatchError(f"mixed vector shapes {sorted(dims)}")
    mean = np.mean(np.stack(stack), axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < ZERO_NORM_TOL:
        raise ZeroMeanError("mean vector has near-zero norm")
    return mean / norm


def aggregate_frame_embeddings(frames: Iterable[np.ndarray]) -> np.ndarray:
    """Mean of per-frame vectors, deliberately not renormalized."""
    stack = [np.asarray(v, dtype=np.float64) for v in frames]
    if not stack:
        raise EmptyInputError("aggregate of an empty frame list")
    dims = {v.shape for v in stack}
    if len(dims) != 1:
        raise DimensionMismatchError(f"mixed frame shapes {sorted(dims)}")
    return np.mean(np.stack(stack), axis=0)


def unit_rows(matrix: np.ndarray, ids: Iterable[str] | None = None) -> np.ndarray:
    """Rows normalized to unit norm in float64; raises on zero-norm rows."""
    m = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms < ZERO_NORM_TOL):
        bad = int(np.argmin(norms))
        label = list(ids)[bad] if ids is not None else f"row {bad}"
        raise ZeroVectorError(f"zero-norm embedding for {label}")
    return m / norms[:, None]
