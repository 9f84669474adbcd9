"""Candidate-background store with two-stage retrieval.

Stage one ranks the whole pool by cosine similarity of semantic embeddings
and keeps the top m; stage two re-ranks those m by L2 style distance and
keeps the top n. Both stages are exact exhaustive scans (the pools are
COCO-scale at most) with ties broken by ascending record id so results are
reproducible.

Persistence is a versioned little-endian binary container:

    magic "DRAGIDX1" | u32 embedding_dim | u32 style_dim | u64 record_count
    then per record:
    u64 id | u32 ref_len | ref utf-8 bytes | embedding f32[dim]
    | style f32[style_dim] | u8 source (0=database, 1=inpainted_support)

Records hold their floats as float32 — the on-disk truth — so a save/load
round trip is bit-exact; retrieval math widens to float64 in memory.
"""

import enum
import struct
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .embedding import as_embedding, as_style_vector
from .errors import (
    DegenerateVectorError,
    DimensionError,
    DuplicateIdError,
    EmptyInputError,
    FormatError,
    IoError,
    StageError,
    ValidationError,
)

__all__ = [
    "RecordSource",
    "BackgroundRecord",
    "BackgroundIndex",
    "RetrievalStage",
    "RetrievalEntry",
    "RetrievalResult",
    "DEFAULT_SEMANTIC_CANDIDATES",
    "DEFAULT_STYLE_KEEP",
    "build_index",
    "retrieve_semantic",
    "rerank_style",
    "retrieve",
    "augment_pool_with_support",
    "save_index",
    "load_index",
]

MAGIC = b"DRAGIDX1"

# Retrieval defaults: 100 semantic candidates re-ranked down to 5.
DEFAULT_SEMANTIC_CANDIDATES = 100
DEFAULT_STYLE_KEEP = 5

_MAX_ID = 2**64 - 1


class RecordSource(enum.Enum):
    DATABASE = "database"
    INPAINTED_SUPPORT = "inpainted_support"


_SOURCE_TO_BYTE = {RecordSource.DATABASE: 0, RecordSource.INPAINTED_SUPPORT: 1}
_BYTE_TO_SOURCE = {v: k for k, v in _SOURCE_TO_BYTE.items()}


def _as_f32(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 1 or arr.size < 1:
        raise DimensionError(f"{what} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} contains non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class BackgroundRecord:
    """One candidate background: image reference plus its two descriptors."""

    record_id: int
    image_ref: str
    embedding: np.ndarray
    style: np.ndarray
    source: RecordSource = RecordSource.DATABASE

    def __post_init__(self):
        if not isinstance(self.record_id, int) or not (0 <= self.record_id <= _MAX_ID):
            raise ValidationError(f"record id must be an unsigned 64-bit integer, got {self.record_id!r}")
        emb = _as_f32(self.embedding, "embedding")
        if not np.linalg.norm(emb.astype(np.float64)):
            raise DegenerateVectorError(f"record {self.record_id} has a zero-norm embedding")
        style = _as_f32(self.style, "style")
        if style.size % 2 != 0:
            raise DimensionError(f"style vector length must be even, got {style.size}")
        if np.any(style[style.size // 2 :] < 0):
            raise ValidationError(f"record {self.record_id} style std entries must be >= 0")
        object.__setattr__(self, "embedding", emb)
        object.__setattr__(self, "style", style)

    def __eq__(self, other):
        return (
            isinstance(other, BackgroundRecord)
            and self.record_id == other.record_id
            and self.image_ref == other.image_ref
            and self.source is other.source
            and np.array_equal(self.embedding, other.embedding)
            and np.array_equal(self.style, other.style)
        )


class RetrievalStage(enum.Enum):
    SEMANTIC = "semantic"
    RERANKED = "reranked"


@dataclass(frozen=True)
class RetrievalEntry:
    record_id: int
    score: float
    style_distance: Optional[float] = None


@dataclass(frozen=True)
class RetrievalResult:
    entries: tuple
    stage: RetrievalStage

    def record_ids(self) -> list:
        return [e.record_id for e in self.entries]


class BackgroundIndex:
    """Immutable collection of BackgroundRecords with uniform dimensions.

    Construction validates everything once; queries are pure reads, so any
    number of threads may search concurrently.
    """

    def __init__(self, records: Sequence[BackgroundRecord]):
        records = tuple(records)
        if not records:
            raise EmptyInputError("an index needs at least one record")
        emb_dim = records[0].embedding.size
        style_dim = records[0].style.size
        seen = set()
        for rec in records:
            if rec.embedding.size != emb_dim:
                raise DimensionError(
                    f"record {rec.record_id} embedding dim {rec.embedding.size} != index dim {emb_dim}"
                )
            if rec.style.size != style_dim:
                raise DimensionError(
                    f"record {rec.record_id} style dim {rec.style.size} != index dim {style_dim}"
                )
            if rec.record_id in seen:
                raise DuplicateIdError(f"duplicate record id {rec.record_id}")
            seen.add(rec.record_id)
        self._records = records
        self.embedding_dim = emb_dim
        self.style_dim = style_dim
        self._ids = np.array([r.record_id for r in records], dtype=np.uint64)
        self._pos = {r.record_id: i for i, r in enumerate(records)}
        self._emb64 = np.ascontiguousarray(
            np.stack([r.embedding for r in records]).astype(np.float64)
        )
        self._style64 = np.ascontiguousarray(
            np.stack([r.style for r in records]).astype(np.float64)
        )

    def __len__(self):
        return len(self._records)

    def __eq__(self, other):
        return isinstance(other, BackgroundIndex) and self._records == other._records

    @property
    def records(self) -> tuple:
        return self._records

    def record(self, record_id: int) -> BackgroundRecord:
        try:
            return self._records[self._pos[record_id]]
        except KeyError:
            raise ValidationError(f"record id {record_id} not in index") from None


def build_index(records: Iterable[BackgroundRecord]) -> BackgroundIndex:
    """Validate records and build a queryable index (insertion order kept)."""
    return BackgroundIndex(list(records))


def _check_count(value, name) -> int:
    if not isinstance(value, int) or value < 1:
        raise ValidationError(f"{name} must be a positive integer, got {value!r}")
    return value


def retrieve_semantic(
    index: BackgroundIndex, query, m: int = DEFAULT_SEMANTIC_CANDIDATES
) -> RetrievalResult:
    """Top-min(m, |index|) records by cosine similarity, descending.

    Ties are broken by ascending record id. m larger than the pool
    truncates silently: small target-domain pools are the norm.
    """
    _check_count(m, "m")
    q = as_embedding(query)
    if q.size != index.embedding_dim:
        raise DimensionError(f"query dim {q.size} != index dim {index.embedding_dim}")
    if not np.linalg.norm(q):
        raise DegenerateVectorError("query embedding has zero norm")
    scores = kernels.cosine_scores(index._emb64, q)
    order = np.lexsort((index._ids, -scores))[: min(m, len(index))]
    entries = tuple(
        RetrievalEntry(record_id=int(index._ids[i]), score=float(scores[i])) for i in order
    )
    return RetrievalResult(entries=entries, stage=RetrievalStage.SEMANTIC)


def rerank_style(
    index: BackgroundIndex,
    candidates: RetrievalResult,
    query_style,
    n: int = DEFAULT_STYLE_KEEP,
) -> RetrievalResult:
    """Re-rank semantic candidates by style distance, keeping the closest n.

    Ascending distance, ties by ascending record id. The semantic scores are
    carried along for reporting but no longer order anything.
    """
    _check_count(n, "n")
    if candidates.stage is not RetrievalStage.SEMANTIC:
        raise StageError(f"expected a semantic-stage result, got {candidates.stage.value}")
    qs = as_style_vector(query_style)
    if qs.size != index.style_dim:
        raise DimensionError(f"query style dim {qs.size} != index dim {index.style_dim}")
    if not candidates.entries:
        return RetrievalResult(entries=(), stage=RetrievalStage.RERANKED)
    positions = [index._pos.get(e.record_id) for e in candidates.entries]
    if None in positions:
        missing = candidates.entries[positions.index(None)].record_id
        raise ValidationError(f"candidate record id {missing} not in index")
    dists = kernels.l2_distances(np.ascontiguousarray(index._style64[positions]), qs)
    ids = np.array([e.record_id for e in candidates.entries], dtype=np.uint64)
    order = np.lexsort((ids, dists))[: min(n, len(candidates.entries))]
    entries = tuple(
        RetrievalEntry(
            record_id=candidates.entries[i].record_id,
            score=candidates.entries[i].score,
            style_distance=float(dists[i]),
        )
        for i in order
    )
    return RetrievalResult(entries=entries, stage=RetrievalStage.RERANKED)


def retrieve(
    index: BackgroundIndex,
    query_embedding,
    query_style,
    m: int = DEFAULT_SEMANTIC_CANDIDATES,
    n: int = DEFAULT_STYLE_KEEP,
) -> RetrievalResult:
    """Both stages in sequence; identical to calling them explicitly."""
    return rerank_style(index, retrieve_semantic(index, query_embedding, m), query_style, n)


def augment_pool_with_support(
    index: BackgroundIndex, inpainted_supports: Sequence[BackgroundRecord]
) -> BackgroundIndex:
    """New index with the inpainted support backgrounds added to the pool.

    Added records are tagged source=inpainted_support regardless of how they
    arrived. The original index is left untouched.
    """
    tagged = [replace(rec, source=RecordSource.INPAINTED_SUPPORT) for rec in inpainted_supports]
    for rec in tagged:
        if rec.record_id in index._pos:
            raise DuplicateIdError(f"record id {rec.record_id} already in index")
    return BackgroundIndex(list(index.records) + tagged)


def save_index(index: BackgroundIndex, path) -> None:
    """Write the versioned binary container (see module docstring)."""
    chunks = [MAGIC, struct.pack("<IIQ", index.embedding_dim, index.style_dim, len(index))]
    for rec in index.records:
        ref = rec.image_ref.encode("utf-8")
        chunks.append(struct.pack("<QI", rec.record_id, len(ref)))
        chunks.append(ref)
        chunks.append(rec.embedding.astype("<f4").tobytes())
        chunks.append(rec.style.astype("<f4").tobytes())
        chunks.append(struct.pack("B", _SOURCE_TO_BYTE[rec.source]))
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(chunks))
    except OSError as exc:
        raise IoError(f"cannot write index to {path!r}: {exc}") from exc


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, size: int) -> bytes:
        if self.off + size > len(self.data):
            raise FormatError("index file truncated")
        out = self.data[self.off : self.off + size]
        self.off += size
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_index(path) -> BackgroundIndex:
    """Read an index container; bit-exact inverse of save_index."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read index from {path!r}: {exc}") from exc
    rd = _Reader(data)
    if rd.take(len(MAGIC)) != MAGIC:
        raise FormatError("bad magic: not an index file or unsupported version")
    emb_dim, style_dim, count = rd.unpack("<IIQ")
    if emb_dim < 1 or style_dim < 1 or count < 1:
        raise FormatError("index header declares empty dimensions or no records")
    records = []
    for _ in range(count):
        rec_id, ref_len = rd.unpack("<QI")
        try:
            ref = rd.take(ref_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"record {rec_id}: image_ref is not valid utf-8") from exc
        emb = np.frombuffer(rd.take(4 * emb_dim), dtype="<f4")
        style = np.frombuffer(rd.take(4 * style_dim), dtype="<f4")
        (source_byte,) = rd.unpack("B")
        if source_byte not in _BYTE_TO_SOURCE:
            raise FormatError(f"record {rec_id}: unknown source tag {source_byte}")
        try:
            records.append(
                BackgroundRecord(
                    record_id=rec_id,
                    image_ref=ref,
                    embedding=emb,
                    style=style,
                    source=_BYTE_TO_SOURCE[source_byte],
                )
            )
        except (ValidationError, DimensionError, DegenerateVectorError) as exc:
            raise FormatError(f"record {rec_id} fails validation: {exc}") from exc
    if rd.off != len(data):
        raise FormatError(f"{len(data) - rd.off} trailing bytes after last record")
    try:
        return build_index(records)
    except (DuplicateIdError, DimensionError) as exc:
        raise FormatError(f"index contents inconsistent: {exc}") from exc
