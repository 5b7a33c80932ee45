"""Finding extraction, concept standardization, and the initial differential.

The first pipeline stage: pull abnormal finding mentions out of the case
narrative, pin each one to a graph concept (or drop it when the aligner says
no candidate fits), then ask for a bounded list of candidate diagnoses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

from .errors import EmptyHypothesesError, JudgmentParseError, ResourceError
from .gateway import Gateway, TaskKind
from .judgments import parse_judgment
from .kg import Concept, KnowledgeGraph


@dataclass(frozen=True)
class CaseDescription:
    """One patient case. ground_truth exists for evaluation only and must
    never reach a rendered prompt."""

    case_id: str
    narrative: str
    ground_truth: str | None = None

    def __post_init__(self):
        if not self.narrative.strip():
            raise ValueError(f"case {self.case_id!r} has an empty narrative")


@dataclass(frozen=True)
class AbnormalEntity:
    raw_mention: str
    concept: Concept
    candidate_set: tuple[Concept, ...]

    def __post_init__(self):
        if self.concept not in self.candidate_set:
            raise ValueError("aligned concept must come from the candidate set")


@dataclass(frozen=True)
class HypothesisSet:
    hypotheses: tuple[str, ...]
    k_max: int = 4

    def __post_init__(self):
        if not 1 <= len(self.hypotheses) <= self.k_max:
            raise ValueError(
                f"differential size {len(self.hypotheses)} outside [1, {self.k_max}]")
        folded = [h.casefold() for h in self.hypotheses]
        if len(set(folded)) != len(folded):
            raise ValueError("differential entries must be pairwise distinct")

    def __iter__(self):
        return iter(self.hypotheses)

    def __len__(self) -> int:
        return len(self.hypotheses)

    def __contains__(self, name: str) -> bool:
        return name.casefold() in (h.casefold() for h in self.hypotheses)


def read_cases(source: str | Path | TextIO) -> list[CaseDescription]:
    """Parse a JSONL case file: case_id, narrative, optional ground_truth."""
    if hasattr(source, "read"):
        name, payload = getattr(source, "name", "<stream>"), source.read()
    else:
        name, payload = str(source), Path(source).read_text(encoding="utf-8")
    cases: list[CaseDescription] = []
    seen: set[str] = set()
    for line_no, line in enumerate(payload.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            case = CaseDescription(
                case_id=str(row["case_id"]),
                narrative=str(row["narrative"]),
                ground_truth=(str(row["ground_truth"])
                              if row.get("ground_truth") is not None else None),
            )
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ResourceError(f"{name}:{line_no}: bad case row: {exc}") from exc
        if case.case_id in seen:
            raise ResourceError(f"{name}:{line_no}: duplicate case id {case.case_id!r}")
        seen.add(case.case_id)
        cases.append(case)
    return cases


def render_findings(findings: list[AbnormalEntity]) -> str:
    """The one rendering of the finding list used by every downstream prompt,
    in narrative extraction order."""
    if not findings:
        return "none recorded"
    return "; ".join(f.concept.preferred_name for f in findings)


def extract_abnormal_entities(case: CaseDescription, gateway: Gateway,
                              graph: KnowledgeGraph,
                              candidate_limit: int = 5) -> list[AbnormalEntity]:
    """Extract raw mentions, standardize each against the graph, keep the
    survivors in narrative order with same-concept duplicates collapsed."""
    exchange = gateway.complete(TaskKind.NER, {"narrative": case.narrative})
    mentions = parse_judgment(TaskKind.NER, exchange.response_text).payload
    findings: list[AbnormalEntity] = []
    seen_ids: set[str] = set()
    for mention in mentions:
        matches = graph.match_entity(mention, limit=candidate_limit)
        if not matches:
            continue
        candidates = tuple(m.concept for m in matches)
        numbered = "\n".join(f"{i}. {c.preferred_name}"
                             for i, c in enumerate(candidates, start=1))
        align = gateway.complete(TaskKind.ALIGN,
                                 {"mention": mention, "candidates": numbered})
        choice = parse_judgment(TaskKind.ALIGN, align.response_text).payload
        if choice is None:
            continue
        if not 1 <= choice <= len(candidates):
            raise JudgmentParseError(
                f"candidate number {choice} outside 1..{len(candidates)} "
                f"for mention {mention!r}", span=align.response_text)
        concept = candidates[choice - 1]
        if concept.id in seen_ids:
            continue
        seen_ids.add(concept.id)
        findings.append(AbnormalEntity(mention, concept, candidates))
    return findings


def generate_hypotheses(case: CaseDescription, findings: list[AbnormalEntity],
                        gateway: Gateway, k_max: int = 4) -> HypothesisSet:
    """Ask for the bounded initial differential.

    Raw lists longer than k_max are a cardinality error before dedup; an
    empty differential stops the pipeline.
    """
    exchange = gateway.complete(TaskKind.HYPOTHESIZE, {
        "narrative": case.narrative,
        "findings": render_findings(findings),
        "k_max": str(k_max),
    })
    items = parse_judgment(TaskKind.HYPOTHESIZE, exchange.response_text,
                           max_items=k_max).payload
    deduped: list[str] = []
    folded: set[str] = set()
    for item in items:
        if item.casefold() in folded:
            continue
        folded.add(item.casefold())
        deduped.append(item)
    if not deduped:
        raise EmptyHypothesesError(
            f"case {case.case_id!r}: model produced no diagnoses")
    return HypothesisSet(tuple(deduped), k_max=k_max)
