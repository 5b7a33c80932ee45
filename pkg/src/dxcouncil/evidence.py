"""Per-hypothesis evidence packages: guideline excerpts plus pruned graph paths.

A package is built once per hypothesis before deliberation and grows through
merges when specialists demand more evidence. Path pruning is a batched
binary judgment made with the top guideline excerpts in context, so a path
survives only when the model deems it coherent for this patient and
consistent with the guidance shown.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .backends import CrossScorer
from .differential import AbnormalEntity, CaseDescription, render_findings
from .errors import HypothesisMismatchError, JudgmentParseError
from .gateway import Gateway, TaskKind
from .guidelines import CompositeQuery, GuidelineIndex, RankedSegment, g_ret
from .judgments import parse_judgment
from .kg import KnowledgeGraph, KnowledgePath, normalize_term, verbalize_path

PRUNE_BATCH = 8
# excerpts shown to the pruning judge; bounds prompt size
PRUNE_CONTEXT_EXCERPTS = 2


@dataclass(frozen=True)
class PruneBatchRecord:
    batch_index: int
    paths: tuple[KnowledgePath, ...]
    judgments: tuple[int, ...]
    guideline_context_ids: tuple[str, ...]

    def __post_init__(self):
        if len(self.judgments) != len(self.paths):
            raise ValueError("judgments must align one-to-one with paths")
        if len(self.paths) > PRUNE_BATCH:
            raise ValueError(f"batch exceeds {PRUNE_BATCH} paths")


@dataclass(frozen=True)
class EvidencePackage:
    """Evidence for one hypothesis at one deliberation iteration.

    pruned_paths is the full audit: every enumerated-and-verbalized path with
    its rejection flag.  degraded marks a hypothesis with no graph concept,
    which carries guideline excerpts only.
    """

    hypothesis: str
    iteration: int
    guideline_excerpts: tuple[RankedSegment, ...]
    valid_paths: tuple[KnowledgePath, ...]
    pruned_paths: tuple[tuple[KnowledgePath, bool], ...]
    batch_records: tuple[PruneBatchRecord, ...] = ()
    disease_concept_id: str | None = None
    degraded: bool = False

    def __post_init__(self):
        if self.iteration < 0:
            raise ValueError("iteration must be >= 0")
        audit_keys = {p.edge_key() for p, _ in self.pruned_paths}
        for path in self.valid_paths:
            if path.edge_key() not in audit_keys:
                raise ValueError("every valid path must appear in the audit record")

    def rejected_paths(self) -> list[KnowledgePath]:
        return [p for p, rejected in self.pruned_paths if rejected]


def _check_partition(valid: list[KnowledgePath], rejected: list[KnowledgePath],
                     enumerated: list[KnowledgePath]) -> None:
    v = {p.edge_key() for p in valid}
    r = {p.edge_key() for p in rejected}
    assert not v & r, "a path cannot be both valid and rejected"
    assert v | r == {p.edge_key() for p in enumerated}, "pruning must partition the paths"


def prune_paths(paths: list[KnowledgePath], case: CaseDescription,
                guideline_top: list[RankedSegment], gateway: Gateway,
                batch_size: int = PRUNE_BATCH,
                ) -> tuple[list[KnowledgePath], list[KnowledgePath], list[PruneBatchRecord]]:
    """Judge verbalized paths in contiguous batches, preserving order.

    Returns (valid, rejected, batch records); len(valid) + len(rejected)
    equals len(paths) and the number of model calls is ceil(len/batch_size).
    """
    for path in paths:
        if not path.verbalization:
            raise ValueError(f"path {path.describe()} is not verbalized")
    guideline_text = "\n".join(
        f"[{seg.segment.segment_id}] {seg.segment.text}" for seg in guideline_top
    ) or "none available"
    context_ids = tuple(seg.segment.segment_id for seg in guideline_top)
    valid: list[KnowledgePath] = []
    rejected: list[KnowledgePath] = []
    records: list[PruneBatchRecord] = []
    for batch_index in range(math.ceil(len(paths) / batch_size)):
        batch = paths[batch_index * batch_size:(batch_index + 1) * batch_size]
        numbered = "\n".join(f"{i}. {p.verbalization}"
                             for i, p in enumerate(batch, start=1))
        exchange = gateway.complete(TaskKind.PRUNE, {
            "narrative": case.narrative,
            "guidelines": guideline_text,
            "paths": numbered,
            "path_count": str(len(batch)),
        })
        bits = parse_judgment(TaskKind.PRUNE, exchange.response_text,
                              expected_bits=len(batch)).payload
        if gateway.trace is not None:
            gateway.trace.prune_batch(batch_index=batch_index, size=len(batch),
                                      bits=list(bits), guideline_ids=list(context_ids))
        for path, bit in zip(batch, bits):
            (valid if bit == 1 else rejected).append(path)
        records.append(PruneBatchRecord(batch_index, tuple(batch), tuple(bits),
                                        context_ids))
    _check_partition(valid, rejected, paths)
    return valid, rejected, records


def _align_disease_concept(hypothesis: str, graph: KnowledgeGraph,
                           gateway: Gateway) -> str | None:
    """Pin a hypothesis name to a graph disease concept, or report that none
    fits. Reuses the mention alignment task; a NONE verdict degrades the
    package to guideline-only evidence."""
    matches = graph.match_entity(hypothesis, limit=5)
    if not matches:
        return None
    candidates = [m.concept for m in matches]
    numbered = "\n".join(f"{i}. {c.preferred_name}"
                         for i, c in enumerate(candidates, start=1))
    exchange = gateway.complete(TaskKind.ALIGN,
                                {"mention": hypothesis, "candidates": numbered})
    choice = parse_judgment(TaskKind.ALIGN, exchange.response_text).payload
    if choice is None:
        return None
    if not 1 <= choice <= len(candidates):
        raise JudgmentParseError(
            f"candidate number {choice} outside 1..{len(candidates)} "
            f"for hypothesis {hypothesis!r}", span=exchange.response_text)
    return candidates[choice - 1].id


def _enumerate_and_verbalize(finding_ids: list[str], disease_id: str,
                             graph: KnowledgeGraph, gateway: Gateway,
                             h_max: int) -> list[KnowledgePath]:
    out: list[KnowledgePath] = []
    for finding_id in finding_ids:
        enumerated = graph.enumerate_paths(finding_id, disease_id, h_max=h_max)
        if gateway.trace is not None:
            gateway.trace.paths(start=finding_id, end=disease_id, h_max=h_max,
                                enumerated=[p.describe() for p in enumerated])
        out.extend(verbalize_path(p, gateway) for p in enumerated)
    return out


def build_initial_package(case: CaseDescription, findings: list[AbnormalEntity],
                          hypothesis: str, graph: KnowledgeGraph,
                          index: GuidelineIndex, scorer: CrossScorer,
                          gateway: Gateway, k: int = 8, n: int = 4,
                          h_max: int = 3, batch_size: int = PRUNE_BATCH,
                          ) -> EvidencePackage:
    """Assemble the iteration-0 package for one hypothesis."""
    query = CompositeQuery.compose(hypothesis,
                                   [f.concept.preferred_name for f in findings])
    excerpts = g_ret(index, query, scorer, k=k, n=n, trace=gateway.trace)
    disease_id = _align_disease_concept(hypothesis, graph, gateway)
    if disease_id is None:
        return EvidencePackage(
            hypothesis=hypothesis, iteration=0,
            guideline_excerpts=tuple(excerpts), valid_paths=(),
            pruned_paths=(), disease_concept_id=None, degraded=True)
    verbalized = _enumerate_and_verbalize([f.concept.id for f in findings],
                                          disease_id, graph, gateway, h_max)
    valid, rejected, records = prune_paths(
        verbalized, case, excerpts[:PRUNE_CONTEXT_EXCERPTS], gateway, batch_size)
    rejected_keys = {p.edge_key() for p in rejected}
    audit = tuple((p, p.edge_key() in rejected_keys) for p in verbalized)
    return EvidencePackage(
        hypothesis=hypothesis, iteration=0,
        guideline_excerpts=tuple(excerpts), valid_paths=tuple(valid),
        pruned_paths=audit, batch_records=tuple(records),
        disease_concept_id=disease_id, degraded=False)


def build_supplement_package(case: CaseDescription, findings: list[AbnormalEntity],
                             base: EvidencePackage, queries: list[str],
                             graph: KnowledgeGraph, index: GuidelineIndex,
                             scorer: CrossScorer, gateway: Gateway,
                             k: int = 8, n: int = 4, h_max: int = 3,
                             batch_size: int = PRUNE_BATCH) -> EvidencePackage:
    """Run refinement queries and package what they bring back.

    Each query text stands in for the composite rendering in retrieval. Path
    enumeration re-runs only for findings a query names (normalized name or
    synonym substring); the disease side is the hypothesis's own concept.
    """
    excerpts: list[RankedSegment] = []
    seen_segments: set[str] = set()
    for query_text in queries:
        query = CompositeQuery.raw(base.hypothesis, query_text)
        for seg in g_ret(index, query, scorer, k=k, n=n, trace=gateway.trace):
            if seg.segment.segment_id not in seen_segments:
                seen_segments.add(seg.segment.segment_id)
                excerpts.append(seg)
    named = _findings_named_in_queries(findings, queries)
    verbalized: list[KnowledgePath] = []
    if base.disease_concept_id is not None and named:
        verbalized = _enumerate_and_verbalize(
            [f.concept.id for f in named], base.disease_concept_id,
            graph, gateway, h_max)
    valid: list[KnowledgePath] = []
    records: list[PruneBatchRecord] = []
    audit: tuple[tuple[KnowledgePath, bool], ...] = ()
    if verbalized:
        valid, rejected, records = prune_paths(
            verbalized, case, excerpts[:PRUNE_CONTEXT_EXCERPTS], gateway, batch_size)
        rejected_keys = {p.edge_key() for p in rejected}
        audit = tuple((p, p.edge_key() in rejected_keys) for p in verbalized)
    return EvidencePackage(
        hypothesis=base.hypothesis, iteration=0,
        guideline_excerpts=tuple(excerpts), valid_paths=tuple(valid),
        pruned_paths=audit, batch_records=tuple(records),
        disease_concept_id=base.disease_concept_id, degraded=base.degraded)


def _findings_named_in_queries(findings: list[AbnormalEntity],
                               queries: list[str]) -> list[AbnormalEntity]:
    normalized_queries = [normalize_term(q) for q in queries]
    named: list[AbnormalEntity] = []
    for finding in findings:
        names = [finding.concept.preferred_name, *finding.concept.synonyms]
        if any(normalize_term(name) in nq
               for name in names for nq in normalized_queries):
            named.append(finding)
    return named


def merge_packages(base: EvidencePackage, supplement: EvidencePackage) -> EvidencePackage:
    """Fold a supplement into the base package: unions keep base order first,
    audits concatenate, and the iteration steps forward by one."""
    if base.hypothesis != supplement.hypothesis:
        raise HypothesisMismatchError(
            f"cannot merge packages for {base.hypothesis!r} and "
            f"{supplement.hypothesis!r}")
    excerpts = list(base.guideline_excerpts)
    seen_segments = {seg.segment.segment_id for seg in excerpts}
    for seg in supplement.guideline_excerpts:
        if seg.segment.segment_id not in seen_segments:
            seen_segments.add(seg.segment.segment_id)
            excerpts.append(seg)
    valid = list(base.valid_paths)
    seen_paths = {p.edge_key() for p in valid}
    for path in supplement.valid_paths:
        if path.edge_key() not in seen_paths:
            seen_paths.add(path.edge_key())
            valid.append(path)
    return replace(
        base,
        iteration=base.iteration + 1,
        guideline_excerpts=tuple(excerpts),
        valid_paths=tuple(valid),
        pruned_paths=base.pruned_paths + supplement.pruned_paths,
        batch_records=base.batch_records + supplement.batch_records,
    )


def render_package(package: EvidencePackage) -> str:
    """The evidence block shown to every specialist judging this hypothesis.

    One rendering for all consumers, so prompts across a panel iteration
    carry byte-identical evidence sections.
    """
    lines: list[str] = []
    if package.guideline_excerpts:
        lines.append("Guideline excerpts:")
        lines.extend(f"[{seg.segment.segment_id}] {seg.segment.text}"
                     for seg in package.guideline_excerpts)
    else:
        lines.append("Guideline excerpts: none retrieved")
    if package.valid_paths:
        lines.append("Mechanistic explanations from the knowledge graph:")
        lines.extend(f"- {p.verbalization}" for p in package.valid_paths)
    elif package.degraded:
        lines.append("Knowledge-graph evidence: unavailable for this diagnosis name")
    else:
        lines.append("Knowledge-graph evidence: no surviving explanation chains")
    return "\n".join(lines)


def render_packages(packages: list[EvidencePackage]) -> str:
    """Per-candidate evidence sections for the single-physician close."""
    sections = []
    for package in packages:
        sections.append(f"--- Candidate: {package.hypothesis} ---\n"
                        + render_package(package))
    return "\n\n".join(sections)
