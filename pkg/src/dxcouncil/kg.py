"""In-memory medical knowledge graph.

Holds concepts with synonym sets, typed directed edges, lexical entity
matching, bounded simple-path enumeration, and deterministic path
verbalization through the model gateway.

Traversal follows stored edge direction only; a loader that wants
bidirectional reasoning must materialize inverse triples itself.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, TextIO

from .errors import (
    DanglingReferenceError,
    EmptyMentionError,
    EmptyResponseError,
    KgLoadError,
    PathEndpointsError,
    UnknownConceptError,
    VerbalizationError,
)

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


def normalize_term(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    return re.sub(r"\s+", " ", text.lower().translate(_PUNCT_TABLE)).strip()


def term_tokens(text: str) -> frozenset[str]:
    return frozenset(normalize_term(text).split()) if normalize_term(text) else frozenset()


@dataclass(frozen=True)
class Concept:
    """A standardized medical concept with a stable CUI-like id."""

    id: str
    preferred_name: str
    synonyms: frozenset[str] = frozenset()
    semantic_types: frozenset[str] = frozenset()

    def matchable_names(self) -> frozenset[str]:
        return self.synonyms | {self.preferred_name}


@dataclass(frozen=True)
class Edge:
    source: str
    relation: str
    target: str

    def as_triple(self) -> tuple[str, str, str]:
        return (self.source, self.relation, self.target)


@dataclass
class KnowledgePath:
    """A simple directed path of 1..h_max hops, verbalized lazily.

    ``node_labels`` carries the preferred names along the path (start node
    first) so verbalization does not need the graph again.
    """

    hops: tuple[Edge, ...]
    start: str
    end: str
    node_labels: tuple[str, ...] = ()
    verbalization: str = ""

    def __post_init__(self):
        if not self.hops:
            raise ValueError("a knowledge path needs at least one hop")
        if self.start != self.hops[0].source or self.end != self.hops[-1].target:
            raise ValueError("path endpoints do not match its hop chain")
        for prev, nxt in zip(self.hops, self.hops[1:]):
            if prev.target != nxt.source:
                raise ValueError("path hops do not form a chain")
        visited = [self.start] + [e.target for e in self.hops]
        if len(set(visited)) != len(visited):
            raise ValueError("path revisits a node")

    def edge_key(self) -> tuple[tuple[str, str, str], ...]:
        """Structural identity: the ordered hop triples."""
        return tuple(e.as_triple() for e in self.hops)

    def describe(self) -> str:
        """Render the hop chain with node names, e.g. ``a --[r]--> b``."""
        labels = self.node_labels or tuple([self.start] + [e.target for e in self.hops])
        parts = [labels[0]]
        for edge, label in zip(self.hops, labels[1:]):
            parts.append(f" --[{edge.relation}]--> {label}")
        return "".join(parts)


@dataclass(frozen=True)
class ConceptMatch:
    """One entity-matching candidate with its score and match tier."""

    concept: Concept
    score: float
    kind: str  # "exact_name" | "exact_synonym" | "token_overlap"


class KnowledgeGraph:
    """Immutable after load; all read operations are thread-safe."""

    def __init__(self, concepts: Iterable[Concept], edges: Iterable[Edge]):
        self._concepts: dict[str, Concept] = {}
        for concept in concepts:
            if concept.id in self._concepts:
                raise ValueError(f"duplicate concept id {concept.id!r}")
            self._concepts[concept.id] = concept
        self._edges: list[Edge] = []
        self._out: dict[str, list[Edge]] = {}
        seen: set[tuple[str, str, str]] = set()
        for edge in edges:
            if edge.source not in self._concepts:
                raise UnknownConceptError(f"edge source {edge.source!r} is not a loaded concept")
            if edge.target not in self._concepts:
                raise UnknownConceptError(f"edge target {edge.target!r} is not a loaded concept")
            if edge.as_triple() in seen:
                continue
            seen.add(edge.as_triple())
            self._edges.append(edge)
            self._out.setdefault(edge.source, []).append(edge)

    @property
    def concept_count(self) -> int:
        return len(self._concepts)

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def concept(self, concept_id: str) -> Concept:
        try:
            return self._concepts[concept_id]
        except KeyError:
            raise UnknownConceptError(f"unknown concept id {concept_id!r}") from None

    def has_concept(self, concept_id: str) -> bool:
        return concept_id in self._concepts

    def concepts(self) -> list[Concept]:
        return list(self._concepts.values())

    def out_edges(self, concept_id: str) -> list[Edge]:
        return list(self._out.get(concept_id, ()))

    # -- entity matching -----------------------------------------------------

    def match_entity(self, raw_mention: str, limit: int = 5) -> list[ConceptMatch]:
        """Rank concepts against a raw mention.

        Tiers: exact normalized preferred-name match (score 1.0), then exact
        synonym match (score 1.0), then token-overlap Jaccard; ties broken by
        ascending concept id. Concepts with zero overlap are excluded.
        """
        if limit < 1:
            raise ValueError("limit must be positive")
        mention = normalize_term(raw_mention)
        if not mention:
            raise EmptyMentionError(f"mention {raw_mention!r} is empty after normalization")
        mention_tokens = frozenset(mention.split())

        scored: list[tuple[int, float, str, ConceptMatch]] = []
        for concept in self._concepts.values():
            if normalize_term(concept.preferred_name) == mention:
                match = ConceptMatch(concept, 1.0, "exact_name")
                scored.append((0, 1.0, concept.id, match))
                continue
            if any(normalize_term(s) == mention for s in concept.synonyms):
                match = ConceptMatch(concept, 1.0, "exact_synonym")
                scored.append((1, 1.0, concept.id, match))
                continue
            best = 0.0
            for name in concept.matchable_names():
                tokens = term_tokens(name)
                if not tokens:
                    continue
                union = mention_tokens | tokens
                if union:
                    best = max(best, len(mention_tokens & tokens) / len(union))
            if best > 0.0:
                match = ConceptMatch(concept, best, "token_overlap")
                scored.append((2, best, concept.id, match))

        scored.sort(key=lambda row: (row[0], -row[1], row[2]))
        return [row[3] for row in scored[:limit]]

    # -- path enumeration ----------------------------------------------------

    def enumerate_paths(self, start: str, end: str, h_max: int = 3) -> list[KnowledgePath]:
        """All simple directed paths ``start -> end`` of length <= h_max.

        Deterministic: ordered by length ascending, then lexicographically
        over the sequence of (relation, target) pairs.
        """
        if h_max < 1:
            raise ValueError("h_max must be >= 1")
        if start == end:
            raise PathEndpointsError(f"path start and end are both {start!r}")
        self.concept(start)
        self.concept(end)

        found: list[tuple[Edge, ...]] = []
        stack: list[Edge] = []
        visited: set[str] = {start}

        def walk(node: str) -> None:
            if len(stack) == h_max:
                return
            for edge in self._out.get(node, ()):
                if edge.target == end:
                    found.append(tuple(stack) + (edge,))
                    continue
                if edge.target in visited:
                    continue
                visited.add(edge.target)
                stack.append(edge)
                walk(edge.target)
                stack.pop()
                visited.remove(edge.target)

        walk(start)
        found.sort(key=lambda hops: (len(hops), tuple((e.relation, e.target) for e in hops)))
        return [self._make_path(hops) for hops in found]

    def _make_path(self, hops: tuple[Edge, ...]) -> KnowledgePath:
        node_ids = [hops[0].source] + [e.target for e in hops]
        labels = tuple(self._concepts[i].preferred_name for i in node_ids)
        return KnowledgePath(hops=hops, start=hops[0].source, end=hops[-1].target,
                             node_labels=labels)


# -- loading -----------------------------------------------------------------

def _open_lines(source: str | Path | TextIO) -> tuple[str, list[str]]:
    if hasattr(source, "read"):
        name = getattr(source, "name", "<stream>")
        return str(name), source.read().splitlines()
    path = Path(source)
    return str(path), path.read_text(encoding="utf-8").splitlines()


def read_concepts(source: str | Path | TextIO) -> list[Concept]:
    """Parse the tab-separated concept file.

    Format per line: ``id \\t preferred_name \\t syn1|syn2 \\t st1|st2``;
    synonym and semantic-type fields may be empty; ``#`` lines are comments.
    """
    name, lines = _open_lines(source)
    concepts: list[Concept] = []
    seen: set[str] = set()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise KgLoadError(name, line_no, f"expected 4 tab-separated fields, got {len(fields)}")
        concept_id, preferred, synonyms, semtypes = (f.strip() for f in fields)
        if not concept_id:
            raise KgLoadError(name, line_no, "empty concept id")
        if not preferred:
            raise KgLoadError(name, line_no, "empty preferred name")
        if concept_id in seen:
            raise KgLoadError(name, line_no, f"duplicate concept id {concept_id!r}")
        seen.add(concept_id)
        concepts.append(Concept(
            id=concept_id,
            preferred_name=preferred,
            synonyms=frozenset(s.strip() for s in synonyms.split("|") if s.strip()),
            semantic_types=frozenset(s.strip() for s in semtypes.split("|") if s.strip()),
        ))
    return concepts


def read_triples(source: str | Path | TextIO) -> list[tuple[int, Edge]]:
    """Parse the tab-separated triple file into (line_no, edge) pairs."""
    name, lines = _open_lines(source)
    triples: list[tuple[int, Edge]] = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise KgLoadError(name, line_no, f"expected 3 tab-separated fields, got {len(fields)}")
        source_id, relation, target_id = (f.strip() for f in fields)
        if not source_id or not relation or not target_id:
            raise KgLoadError(name, line_no, "empty field in triple")
        triples.append((line_no, Edge(source_id, relation, target_id)))
    return triples


def load_kg(triples_source: str | Path | TextIO,
            concepts_source: str | Path | TextIO) -> KnowledgeGraph:
    """Build a graph from concept and triple files.

    Duplicate triples collapse to one edge; an edge referencing an id not in
    the concept file is a dangling-reference error.
    """
    concepts = read_concepts(concepts_source)
    ids = {c.id for c in concepts}
    edges: list[Edge] = []
    for line_no, edge in read_triples(triples_source):
        if edge.source not in ids:
            raise DanglingReferenceError(edge.source, line_no)
        if edge.target not in ids:
            raise DanglingReferenceError(edge.target, line_no)
        edges.append(edge)
    return KnowledgeGraph(concepts, edges)


# -- verbalization -----------------------------------------------------------

def verbalize_path(path: KnowledgePath, gw) -> KnowledgePath:
    """Have the gateway render a path as one natural-language sentence.

    The raw hop-chain rendering goes into the prompt (and therefore the
    trace), so verbalization is replayable. Returns a new path with the
    verbalization set.
    """
    from .gateway import TaskKind

    chain = path.describe()
    try:
        exchange = gw.complete(TaskKind.VERBALIZE, {"path": chain})
    except Exception as exc:
        raise VerbalizationError(f"verbalization failed for path {chain!r}") from exc
    sentence = exchange.response_text.strip()
    if not sentence:
        raise EmptyResponseError(f"empty verbalization for path {chain!r}")
    return replace(path, verbalization=sentence)
