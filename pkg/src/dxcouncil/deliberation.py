"""Complexity routing, specialist panels, and the consensus loop.

A case judged SIMPLE goes straight to a single-physician close over the
prebuilt evidence. A COMPLEX case convenes a panel per candidate diagnosis:
each round the panel opines over identical evidence, the controller computes
the support score and the insufficiency ratio as exact stance fractions, and
either stops (strong support, sufficient evidence, or round budget) or sends
targeted queries back through retrieval and merges what returns.

The controller itself is pure arithmetic, not a model call; its only job is
counting stances against thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .backends import CrossScorer
from .differential import (
    AbnormalEntity,
    CaseDescription,
    HypothesisSet,
    render_findings,
)
from .errors import (
    AdjudicationMismatchError,
    EmptyOpinionsError,
    EmptyRosterError,
    UnknownSpecialtyError,
)
from .evidence import (
    EvidencePackage,
    build_supplement_package,
    merge_packages,
    render_package,
    render_packages,
)
from .gateway import Gateway, TaskKind
from .guidelines import GuidelineIndex
from .judgments import parse_judgment
from .kg import KnowledgeGraph

DEFAULT_ROSTER = (
    "Hepatology",
    "Oncology",
    "Immunology",
    "Infectious Disease",
    "Gastroenterology",
    "Nephrology",
    "Dermatology",
    "Hematology",
)

TAU_SUFF = 0.5
TAU_HIGH = 0.9
T_MAX = 3
MAX_SPECIALISTS = 4

NEXT_STEPS_MARKER = "Next steps:"


class ComplexityFlag(Enum):
    SIMPLE = 0
    COMPLEX = 1


class Stance(Enum):
    SUPPORT = "S"
    NEUTRAL = "N"
    OPPOSE = "O"


class Sufficiency(Enum):
    SUFFICIENT = "Suf"
    INSUFFICIENT = "Ins"


@dataclass(frozen=True)
class ComplexityVerdict:
    flag: ComplexityFlag
    rationale: str


@dataclass(frozen=True)
class SpecialistRoster:
    hypothesis: str
    specialties: tuple[str, ...]

    def __post_init__(self):
        if not self.specialties:
            raise EmptyRosterError(f"no specialists for {self.hypothesis!r}")
        if len(set(self.specialties)) != len(self.specialties):
            raise ValueError("roster entries must be pairwise distinct")


@dataclass(frozen=True)
class SpecialistOpinion:
    specialty: str
    hypothesis: str
    iteration: int
    stance: Stance
    confidence: float
    sufficiency: Sufficiency
    justification: str

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if not self.justification.strip():
            raise ValueError("justification must be non-empty")


@dataclass(frozen=True)
class ConsensusSnapshot:
    hypothesis: str
    iteration: int
    opinions: tuple[SpecialistOpinion, ...]
    support_score: float
    insufficiency_ratio: float
    interim_report: str


@dataclass(frozen=True)
class FinalReport:
    final_diagnosis: str
    per_hypothesis_snapshots: tuple[ConsensusSnapshot, ...]
    consensus_narrative: str
    recommended_next_steps: str


def consensus_score(opinions: list[SpecialistOpinion]) -> float:
    """Fraction of the panel whose stance is support. Confidence values do
    not enter this score; they are carried into reports only."""
    if not opinions:
        raise EmptyOpinionsError("cannot score an empty opinion list")
    return sum(1 for o in opinions if o.stance is Stance.SUPPORT) / len(opinions)


def insufficiency_ratio(opinions: list[SpecialistOpinion]) -> float:
    """Fraction of the panel judging the current evidence insufficient."""
    if not opinions:
        raise EmptyOpinionsError("cannot compute a ratio over no opinions")
    return (sum(1 for o in opinions if o.sufficiency is Sufficiency.INSUFFICIENT)
            / len(opinions))


def assess_complexity(case: CaseDescription, findings: list[AbnormalEntity],
                      hypotheses: HypothesisSet, gateway: Gateway) -> ComplexityVerdict:
    exchange = gateway.complete(TaskKind.ASSESS_COMPLEXITY, {
        "narrative": case.narrative,
        "findings": render_findings(findings),
        "hypotheses": "; ".join(hypotheses),
    })
    word = parse_judgment(TaskKind.ASSESS_COMPLEXITY, exchange.response_text).payload
    flag = ComplexityFlag.SIMPLE if word == "SIMPLE" else ComplexityFlag.COMPLEX
    if gateway.trace is not None:
        gateway.trace.decision("complexity", {"flag": flag.name})
    return ComplexityVerdict(flag=flag, rationale=exchange.response_text.strip())


def _match_hypothesis(diagnosis: str, hypotheses: HypothesisSet) -> str:
    for name in hypotheses:
        if name.casefold() == diagnosis.casefold():
            return name
    raise AdjudicationMismatchError(diagnosis, list(hypotheses))


def _split_report(report: str) -> tuple[str, str]:
    # the closing templates ask for a "Next steps:" line; absent one, the
    # whole report is the narrative
    pos = report.find(NEXT_STEPS_MARKER)
    if pos < 0:
        return report.strip(), ""
    return report[:pos].strip(), report[pos + len(NEXT_STEPS_MARKER):].strip()


def generalist_direct_diagnosis(case: CaseDescription,
                                findings: list[AbnormalEntity],
                                hypotheses: HypothesisSet,
                                packages: list[EvidencePackage],
                                gateway: Gateway) -> FinalReport:
    """Single-physician close for a SIMPLE case: one call over every
    candidate's prebuilt evidence, no panel convened."""
    exchange = gateway.complete(TaskKind.GENERALIST_DIRECT, {
        "narrative": case.narrative,
        "findings": render_findings(findings),
        "hypotheses": "; ".join(hypotheses),
        "packages": render_packages(packages),
    })
    parsed = parse_judgment(TaskKind.GENERALIST_DIRECT, exchange.response_text).payload
    diagnosis = _match_hypothesis(parsed["diagnosis"], hypotheses)
    narrative, next_steps = _split_report(parsed["report"])
    if gateway.trace is not None:
        gateway.trace.decision("final_report", {
            "final_diagnosis": diagnosis, "route": "direct"})
    return FinalReport(final_diagnosis=diagnosis, per_hypothesis_snapshots=(),
                       consensus_narrative=narrative,
                       recommended_next_steps=next_steps)


def dispatch_specialists(case: CaseDescription, findings: list[AbnormalEntity],
                         hypothesis: str, gateway: Gateway,
                         roster: tuple[str, ...] = DEFAULT_ROSTER,
                         max_specialists: int = MAX_SPECIALISTS) -> SpecialistRoster:
    """Choose which specialties review one candidate diagnosis.

    Names outside the configured roster are an error; duplicates collapse;
    anything past the cap is dropped in order.
    """
    exchange = gateway.complete(TaskKind.DISPATCH, {
        "narrative": case.narrative,
        "findings": render_findings(findings),
        "hypothesis": hypothesis,
        "roster": "; ".join(roster),
        "max_specialists": str(max_specialists),
    })
    names = parse_judgment(TaskKind.DISPATCH, exchange.response_text).payload
    chosen: list[str] = []
    for name in names:
        if name not in roster:
            raise UnknownSpecialtyError(name)
        if name not in chosen:
            chosen.append(name)
    if not chosen:
        raise EmptyRosterError(f"dispatch chose no specialists for {hypothesis!r}")
    chosen = chosen[:max_specialists]
    if gateway.trace is not None:
        gateway.trace.decision("roster", {"hypothesis": hypothesis,
                                          "specialties": chosen})
    return SpecialistRoster(hypothesis=hypothesis, specialties=tuple(chosen))


def elicit_opinion(specialty: str, case: CaseDescription,
                   findings: list[AbnormalEntity], hypothesis: str,
                   package: EvidencePackage, gateway: Gateway) -> SpecialistOpinion:
    """One specialist's verdict over the shared evidence block."""
    exchange = gateway.complete(TaskKind.SPECIALIST_OPINION, {
        "specialty": specialty,
        "narrative": case.narrative,
        "findings": render_findings(findings),
        "hypothesis": hypothesis,
        "iteration": str(package.iteration),
        "evidence": render_package(package),
    })
    parsed = parse_judgment(TaskKind.SPECIALIST_OPINION, exchange.response_text).payload
    return SpecialistOpinion(
        specialty=specialty, hypothesis=hypothesis, iteration=package.iteration,
        stance=Stance(parsed["stance"]), confidence=parsed["confidence"],
        sufficiency=Sufficiency(parsed["sufficiency"]),
        justification=parsed["justification"])


def formulate_refinement_queries(opinions: list[SpecialistOpinion],
                                 hypothesis: str, case: CaseDescription,
                                 findings: list[AbnormalEntity],
                                 gateway: Gateway) -> list[str]:
    """Turn the panel's insufficiency complaints into 1-3 retrieval queries."""
    gaps = [o for o in opinions if o.sufficiency is Sufficiency.INSUFFICIENT]
    if not gaps:
        raise EmptyOpinionsError("refinement requires at least one Ins opinion")
    rendered_gaps = "\n".join(f"- ({o.specialty}) {o.justification}" for o in gaps)
    exchange = gateway.complete(TaskKind.REFINE_QUERY, {
        "hypothesis": hypothesis,
        "narrative": case.narrative,
        "findings": render_findings(findings),
        "gaps": rendered_gaps,
    })
    return list(parse_judgment(TaskKind.REFINE_QUERY, exchange.response_text).payload)


def _render_opinions(opinions: list[SpecialistOpinion]) -> str:
    return "\n".join(
        f"- {o.specialty}: stance={o.stance.value}, confidence={o.confidence:.2f}, "
        f"evidence={o.sufficiency.value}, note: {o.justification}"
        for o in opinions)


def _interim_report(hypothesis: str, iteration: int,
                    opinions: list[SpecialistOpinion], support: float,
                    insufficiency: float, gateway: Gateway) -> str:
    exchange = gateway.complete(TaskKind.INTERIM_CONSENSUS, {
        "hypothesis": hypothesis,
        "iteration": str(iteration),
        "support_score": f"{support:.2f}",
        "insufficiency_ratio": f"{insufficiency:.2f}",
        "opinions": _render_opinions(opinions),
    })
    parsed = parse_judgment(TaskKind.INTERIM_CONSENSUS, exchange.response_text).payload
    return parsed["report"]


def run_deliberation_loop(case: CaseDescription, findings: list[AbnormalEntity],
                          hypotheses: HypothesisSet,
                          packages: list[EvidencePackage],
                          rosters: list[SpecialistRoster],
                          graph: KnowledgeGraph, index: GuidelineIndex,
                          scorer: CrossScorer, gateway: Gateway, *,
                          tau_suff: float = TAU_SUFF, tau_high: float = TAU_HIGH,
                          t_max: int = T_MAX, k: int = 8, n: int = 4,
                          h_max: int = 3, batch_size: int = 8,
                          ) -> list[ConsensusSnapshot]:
    """Run every hypothesis's panel to its stopping point.

    Stop order within a round: strong support first (s > tau_high), then
    evidence sufficiency (rho <= tau_suff), then the round budget. Returns
    one final snapshot per hypothesis, in differential order.
    """
    finals: list[ConsensusSnapshot] = []
    for hypothesis, package, roster in zip(hypotheses, packages, rosters):
        assert roster.hypothesis == hypothesis
        snapshot: ConsensusSnapshot | None = None
        for t in range(t_max):
            assert package.iteration == t
            opinions = [
                elicit_opinion(s, case, findings, hypothesis, package, gateway)
                for s in roster.specialties
            ]
            support = consensus_score(opinions)
            insufficiency = insufficiency_ratio(opinions)
            report = _interim_report(hypothesis, t, opinions, support,
                                     insufficiency, gateway)
            snapshot = ConsensusSnapshot(
                hypothesis=hypothesis, iteration=t, opinions=tuple(opinions),
                support_score=support, insufficiency_ratio=insufficiency,
                interim_report=report)
            if gateway.trace is not None:
                gateway.trace.decision("snapshot", {
                    "hypothesis": hypothesis, "iteration": t,
                    "support_score": support, "insufficiency_ratio": insufficiency,
                    "stances": [o.stance.value for o in opinions],
                    "sufficiency": [o.sufficiency.value for o in opinions],
                })
            if support > tau_high:
                break
            if insufficiency <= tau_suff:
                break
            if t + 1 == t_max:
                break
            queries = formulate_refinement_queries(opinions, hypothesis, case,
                                                   findings, gateway)
            supplement = build_supplement_package(
                case, findings, package, queries, graph, index, scorer, gateway,
                k=k, n=n, h_max=h_max, batch_size=batch_size)
            package = merge_packages(package, supplement)
        assert snapshot is not None
        finals.append(snapshot)
    return finals


def final_adjudication(snapshots: list[ConsensusSnapshot], case: CaseDescription,
                       findings: list[AbnormalEntity], hypotheses: HypothesisSet,
                       gateway: Gateway) -> FinalReport:
    """Close a COMPLEX case: one holistic call over every panel's outcome."""
    sections = []
    for snap in snapshots:
        unresolved = [o.justification for o in snap.opinions
                      if o.sufficiency is Sufficiency.INSUFFICIENT]
        sections.append(
            f"Candidate: {snap.hypothesis}\n"
            f"  support score: {snap.support_score:.2f}\n"
            f"  panel report: {snap.interim_report}\n"
            f"  unresolved gaps: {'; '.join(unresolved) if unresolved else 'none'}")
    exchange = gateway.complete(TaskKind.FINAL_ADJUDICATE, {
        "narrative": case.narrative,
        "findings": render_findings(findings),
        "summaries": "\n".join(sections),
    })
    parsed = parse_judgment(TaskKind.FINAL_ADJUDICATE, exchange.response_text).payload
    diagnosis = _match_hypothesis(parsed["diagnosis"], hypotheses)
    narrative, next_steps = _split_report(parsed["report"])
    if gateway.trace is not None:
        gateway.trace.decision("final_report", {
            "final_diagnosis": diagnosis, "route": "deliberated"})
    return FinalReport(final_diagnosis=diagnosis,
                       per_hypothesis_snapshots=tuple(snapshots),
                       consensus_narrative=narrative,
                       recommended_next_steps=next_steps)
