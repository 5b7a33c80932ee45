"""Embedding and cross-scoring backends for guideline retrieval.

Three embedder flavors: a live OpenAI-compatible HTTP client, a replay table
keyed by exact text, and a deterministic hash-seeded pseudo-random embedder
for offline runs and tests. Cross-scorers mirror that split: HTTP reranker,
scripted score table, and a deterministic lexical-overlap scorer.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import DimensionMismatchError, ResourceError
from .kg import term_tokens


class Embedder(Protocol):
    dim: int

    def embed(self, texts: list[str]) -> list[np.ndarray]: ...


class CrossScorer(Protocol):
    def score(self, query_text: str, segment_text: str) -> float: ...


# -- embedders ---------------------------------------------------------------

class HashEmbedder:
    """Deterministic pseudo-random embeddings seeded from the text digest.

    Same text always maps to the same vector, across processes and runs, so
    offline pipelines stay byte-reproducible with no stored table.
    """

    def __init__(self, dim: int = 32):
        if dim < 1:
            raise ValueError("embedding dimension must be positive")
        self.dim = dim

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
            rng = np.random.default_rng(seed)
            out.append(rng.standard_normal(self.dim))
        return out


class TableEmbedder:
    """Replay embeddings from a JSONL table keyed by exact text.

    Row format: ``{"text": ..., "embedding": [...]}``. A lookup miss is an
    error: replay must be closed over everything the pipeline will ask for.
    """

    def __init__(self, table: dict[str, np.ndarray], dim: int):
        self.table = table
        self.dim = dim

    @classmethod
    def load(cls, path: str | Path) -> "TableEmbedder":
        table: dict[str, np.ndarray] = {}
        dim: int | None = None
        for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                vec = np.asarray(row["embedding"], dtype=float)
                text = row["text"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ResourceError(f"{path}:{line_no}: bad embedding row: {exc}") from exc
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise DimensionMismatchError(
                    f"{path}:{line_no}: embedding dim {vec.shape[0]} != {dim}")
            table[text] = vec
        if dim is None:
            raise ResourceError(f"{path}: embedding table is empty")
        return cls(table, dim)

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            if text not in self.table:
                raise ResourceError(f"embedding table has no entry for text {text!r}")
            out.append(self.table[text])
        return out


class HttpEmbedder:
    """OpenAI-compatible embeddings endpoint.

    POST ``{"input": [texts], "model": ...}`` ->
    ``{"data": [{"index": i, "embedding": [...]}]}``.
    """

    def __init__(self, endpoint: str, model: str, dim: int | None = None, timeout: float = 60.0):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.dim = dim or 0
        self.timeout = timeout

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        import requests

        resp = requests.post(
            f"{self.endpoint}/embeddings",
            json={"input": texts, "model": self.model},
            timeout=self.timeout,
        )
        resp.raise_for_status()
        data = sorted(resp.json()["data"], key=lambda row: row["index"])
        vectors = [np.asarray(row["embedding"], dtype=float) for row in data]
        if vectors and not self.dim:
            self.dim = vectors[0].shape[0]
        return vectors


# -- cross scorers -----------------------------------------------------------

class LexicalOverlapScorer:
    """Deterministic offline cross-scorer: token Jaccard overlap."""

    def score(self, query_text: str, segment_text: str) -> float:
        q, s = term_tokens(query_text), term_tokens(segment_text)
        if not q or not s:
            return 0.0
        return len(q & s) / len(q | s)


class TableScorer:
    """Scripted pairwise scores, keyed by (query text, segment text).

    File rows: ``{"query": ..., "text": ..., "score": x}``. A miss raises so
    a scripted test that forgot a pair fails loudly instead of silently.
    """

    def __init__(self, table: dict[tuple[str, str], float]):
        self.table = table

    @classmethod
    def load(cls, path: str | Path) -> "TableScorer":
        table: dict[tuple[str, str], float] = {}
        for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                table[(row["query"], row["text"])] = float(row["score"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ResourceError(f"{path}:{line_no}: bad score row: {exc}") from exc
        return cls(table)

    def score(self, query_text: str, segment_text: str) -> float:
        key = (query_text, segment_text)
        if key not in self.table:
            raise ResourceError(f"score table has no entry for query {query_text!r}")
        return self.table[key]


class HttpScorer:
    """Reranker service client.

    POST ``{"model": ..., "query": ..., "documents": [text]}`` ->
    ``{"results": [{"index": 0, "relevance_score": x}]}``. Called per pair to
    keep the scorer contract minimal.
    """

    def __init__(self, endpoint: str, model: str, timeout: float = 60.0):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.timeout = timeout

    def score(self, query_text: str, segment_text: str) -> float:
        import requests

        resp = requests.post(
            f"{self.endpoint}/rerank",
            json={"model": self.model, "query": query_text, "documents": [segment_text]},
            timeout=self.timeout,
        )
        resp.raise_for_status()
        return float(resp.json()["results"][0]["relevance_score"])


# -- recording wrappers ------------------------------------------------------

class RecordingEmbedder:
    """Wraps an embedder and writes every (text, vector) pair as a replay
    table row. Floats survive the JSON round trip exactly, so a replay run
    reproduces the recorded run bit for bit."""

    def __init__(self, inner: Embedder, sink_path: str | Path):
        self._inner = inner
        self._fh = open(sink_path, "w", encoding="utf-8")
        self._seen: set[str] = set()
        self._lock = threading.Lock()

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        vectors = self._inner.embed(texts)
        with self._lock:
            for text, vec in zip(texts, vectors):
                if text in self._seen:
                    continue
                self._seen.add(text)
                self._fh.write(json.dumps(
                    {"text": text, "embedding": [float(x) for x in vec]},
                    ensure_ascii=False) + "\n")
            self._fh.flush()
        return vectors

    def close(self) -> None:
        self._fh.close()


class RecordingScorer:
    """Wraps a cross-scorer and captures every scored pair."""

    def __init__(self, inner: CrossScorer, sink_path: str | Path):
        self._inner = inner
        self._fh = open(sink_path, "w", encoding="utf-8")
        self._seen: set[tuple[str, str]] = set()
        self._lock = threading.Lock()

    def score(self, query_text: str, segment_text: str) -> float:
        value = float(self._inner.score(query_text, segment_text))
        with self._lock:
            if (query_text, segment_text) not in self._seen:
                self._seen.add((query_text, segment_text))
                self._fh.write(json.dumps(
                    {"query": query_text, "text": segment_text, "score": value},
                    ensure_ascii=False) + "\n")
                self._fh.flush()
        return value

    def close(self) -> None:
        self._fh.close()
