"""Guideline corpus index and the two-stage retrieval pipeline.

Stage one embeds a composite query and takes the top-k segments by cosine
similarity; stage two rescores those candidates pairwise with a cross-scorer
and keeps the top-n. Embeddings are unit-normalized at ingest so cosine is a
plain dot product. Ties at both stages break by ascending segment id, which
keeps ranked lists byte-stable for replay.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import TextIO

import numpy as np

from .backends import CrossScorer, Embedder
from .errors import (
    CorpusError,
    DimensionMismatchError,
    EmptyCandidatesError,
    EmptyCorpusError,
    EmptyIndexError,
    RerankError,
)
from .trace import Trace


@dataclass(frozen=True)
class GuidelineSegment:
    segment_id: str
    source_doc: str
    text: str
    embedding: np.ndarray | None = None


class Stage(Enum):
    DENSE_ONLY = "dense_only"
    RERANKED = "reranked"


@dataclass(frozen=True)
class RankedSegment:
    segment: GuidelineSegment
    dense_score: float
    rerank_score: float | None = None
    stage: Stage = Stage.DENSE_ONLY

    def __post_init__(self):
        if self.stage is Stage.RERANKED and self.rerank_score is None:
            raise ValueError("a reranked segment needs a rerank score")


@dataclass(frozen=True)
class CompositeQuery:
    """The retrieval query for one hypothesis.

    The canonical rendering is ``"<hypothesis> | findings: <n1>; <n2>; ..."``
    with findings in extraction order; refinement queries substitute raw
    query text for the rendering.
    """

    hypothesis: str
    findings: tuple[str, ...]
    rendered: str

    @classmethod
    def compose(cls, hypothesis: str, finding_names: list[str]) -> "CompositeQuery":
        rendered = f"{hypothesis} | findings: " + "; ".join(finding_names)
        return cls(hypothesis, tuple(finding_names), rendered)

    @classmethod
    def raw(cls, hypothesis: str, query_text: str) -> "CompositeQuery":
        return cls(hypothesis, (), query_text)


def read_corpus(source: str | Path | TextIO) -> list[GuidelineSegment]:
    """Parse a JSONL corpus: one object per line with segment_id,
    source_doc, and text."""
    if hasattr(source, "read"):
        name, payload = getattr(source, "name", "<stream>"), source.read()
    else:
        name, payload = str(source), Path(source).read_text(encoding="utf-8")
    segments: list[GuidelineSegment] = []
    seen: set[str] = set()
    for line_no, line in enumerate(payload.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            segment = GuidelineSegment(str(row["segment_id"]), str(row["source_doc"]),
                                       str(row["text"]))
        except (json.JSONDecodeError, KeyError) as exc:
            raise CorpusError(f"{name}:{line_no}: bad corpus row: {exc}") from exc
        if not segment.text.strip():
            raise CorpusError(f"{name}:{line_no}: segment {segment.segment_id!r} has empty text")
        if segment.segment_id in seen:
            raise CorpusError(f"{name}:{line_no}: duplicate segment id {segment.segment_id!r}")
        seen.add(segment.segment_id)
        segments.append(segment)
    return segments


class GuidelineIndex:
    """Immutable after ingest; retrieval calls are thread-safe."""

    def __init__(self, segments: list[GuidelineSegment], embedder: Embedder, dim: int):
        self._segments = segments
        self._embedder = embedder
        self.dim = dim

    @property
    def segment_count(self) -> int:
        return len(self._segments)

    def segments(self) -> list[GuidelineSegment]:
        return list(self._segments)

    def embed_query(self, text: str) -> np.ndarray:
        vec = np.asarray(self._embedder.embed([text])[0], dtype=float)
        if vec.shape[0] != self.dim:
            raise DimensionMismatchError(
                f"query embedding dim {vec.shape[0]} != index dim {self.dim}")
        return _unit(vec)


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise DimensionMismatchError("cannot normalize a zero embedding vector")
    return vec / norm


def ingest_corpus(segments: list[GuidelineSegment], embedder: Embedder) -> GuidelineIndex:
    """Embed every segment and build the index.

    Stored vectors are unit-normalized; embedding results commit in source
    order regardless of how the backend batches.
    """
    if not segments:
        raise EmptyCorpusError("corpus contains no segments")
    vectors = embedder.embed([s.text for s in segments])
    dim: int | None = None
    stored: list[GuidelineSegment] = []
    for segment, vec in zip(segments, vectors):
        vec = np.asarray(vec, dtype=float)
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise DimensionMismatchError(
                f"segment {segment.segment_id!r} embedding dim {vec.shape[0]} != {dim}")
        stored.append(replace(segment, embedding=_unit(vec)))
    assert dim is not None
    return GuidelineIndex(stored, embedder, dim)


def dense_retrieve(index: GuidelineIndex, query: CompositeQuery, k: int) -> list[RankedSegment]:
    """Top-k segments by cosine similarity, ties by ascending segment id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if index.segment_count == 0:
        raise EmptyIndexError("cannot retrieve from an empty index")
    q = index.embed_query(query.rendered)
    scored = [
        RankedSegment(segment=s, dense_score=float(np.dot(s.embedding, q)))
        for s in index.segments()
    ]
    scored.sort(key=lambda r: (-r.dense_score, r.segment.segment_id))
    return scored[:k]


def rerank(candidates: list[RankedSegment], query: CompositeQuery,
           scorer: CrossScorer, n: int) -> list[RankedSegment]:
    """Cross-score every candidate pairwise and keep the top-n.

    Dense scores are preserved on the output; ties break by ascending
    segment id.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not candidates:
        raise EmptyCandidatesError("no candidates to rerank")
    rescored: list[RankedSegment] = []
    for cand in candidates:
        try:
            score = float(scorer.score(query.rendered, cand.segment.text))
        except Exception as exc:
            raise RerankError(
                f"cross-scoring failed for segment {cand.segment.segment_id!r}: {exc}") from exc
        rescored.append(replace(cand, rerank_score=score, stage=Stage.RERANKED))
    rescored.sort(key=lambda r: (-r.rerank_score, r.segment.segment_id))
    return rescored[:n]


def g_ret(index: GuidelineIndex, query: CompositeQuery, scorer: CrossScorer,
          k: int = 8, n: int = 4, trace: Trace | None = None) -> list[RankedSegment]:
    """The full two-stage retrieval: dense top-k, then reranked top-n.

    Records the rendered query and both ranked stages in the trace.
    """
    dense = dense_retrieve(index, query, k)
    ranked = rerank(dense, query, scorer, n)
    if trace is not None:
        trace.retrieval(
            query=query.rendered,
            dense=[{"segment_id": r.segment.segment_id, "dense_score": r.dense_score}
                   for r in dense],
            reranked=[{"segment_id": r.segment.segment_id, "dense_score": r.dense_score,
                       "rerank_score": r.rerank_score} for r in ranked],
            k=k, n=n,
        )
    return ranked
