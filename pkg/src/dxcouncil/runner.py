"""End-to-end case execution and batch evaluation.

A Runtime loads the graph, the guideline index, and the backends once per
config; each case then runs the full workflow against those shared
resources, producing a final report plus an audit trace written as one file
per case. Batches fan cases out across a thread pool and always leave a
parseable partial trace behind a failed case.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .backends import (
    CrossScorer,
    Embedder,
    HttpEmbedder,
    HttpScorer,
    RecordingEmbedder,
    RecordingScorer,
    TableEmbedder,
    TableScorer,
)
from .config import BackendMode, RunConfig
from .deliberation import (
    ComplexityFlag,
    FinalReport,
    assess_complexity,
    dispatch_specialists,
    final_adjudication,
    generalist_direct_diagnosis,
    run_deliberation_loop,
)
from .differential import (
    CaseDescription,
    extract_abnormal_entities,
    generate_hypotheses,
    read_cases,
)
from .errors import CaseFailure, ConfigError, EmptyCorpusError, EngineError
from .evidence import build_initial_package
from .gateway import (
    ChatBackend,
    Gateway,
    HttpChatBackend,
    RecordingBackend,
    ReplayChatBackend,
    TranscriptRecorder,
)
from .guidelines import GuidelineIndex, ingest_corpus, read_corpus
from .kg import KnowledgeGraph, load_kg
from .metrics import MetricsReport, weighted_metrics
from .trace import Trace


class Runtime:
    """Shared per-config state: resources, index, and wired backends.

    Test and fixture code may inject chat_backend, embedder, or scorer to
    bypass mode wiring; anything injected wins over the config.
    """

    def __init__(self, config: RunConfig, *, chat_backend: ChatBackend | None = None,
                 embedder: Embedder | None = None, scorer: CrossScorer | None = None):
        self.config = config
        self.graph: KnowledgeGraph = load_kg(config.triples_path, config.concepts_path)
        self._recorder: TranscriptRecorder | None = None
        self.chat_backend = chat_backend or self._wire_chat(config)
        self.embedder = embedder or self._wire_embedder(config)
        self.scorer = scorer or self._wire_scorer(config)
        segments = read_corpus(config.corpus_path)
        self.index: GuidelineIndex = ingest_corpus(segments, self.embedder)

    def _wire_chat(self, config: RunConfig) -> ChatBackend:
        if config.mode is BackendMode.REPLAY:
            return ReplayChatBackend.from_file(config.transcript_path)
        backend: ChatBackend = HttpChatBackend(
            f"{config.endpoint.rstrip('/')}/chat/completions",
            config.chat_model or "default")
        if config.mode is BackendMode.RECORD:
            self._recorder = TranscriptRecorder(config.transcript_path)
            backend = RecordingBackend(backend, self._recorder)
        return backend

    def _wire_embedder(self, config: RunConfig) -> Embedder:
        if config.mode is BackendMode.REPLAY:
            return TableEmbedder.load(config.embeddings_path)
        live = HttpEmbedder(config.endpoint, config.embed_model or "default")
        if config.mode is BackendMode.RECORD:
            return RecordingEmbedder(live, config.embeddings_path)
        return live

    def _wire_scorer(self, config: RunConfig) -> CrossScorer:
        if config.mode is BackendMode.REPLAY:
            return TableScorer.load(config.scores_path)
        live = HttpScorer(config.endpoint, config.rerank_model or "default")
        if config.mode is BackendMode.RECORD:
            return RecordingScorer(live, config.scores_path)
        return live

    def close(self) -> None:
        if self._recorder is not None:
            self._recorder.close()
        for component in (self.embedder, self.scorer):
            close = getattr(component, "close", None)
            if close is not None:
                close()


def trace_path_for(config: RunConfig, case_id: str) -> Path:
    return config.output_dir / f"{case_id}.trace.jsonl"


def run_case(runtime: Runtime, case: CaseDescription,
             write_trace: bool = True) -> tuple[FinalReport, Trace]:
    """Run one case through the whole workflow.

    On failure the partial trace is still flushed to disk before the error
    surfaces, wrapped with the failing stage's label.
    """
    config = runtime.config
    trace = Trace(case.case_id)
    gateway = Gateway(runtime.chat_backend, trace)
    stage = "extract"
    try:
        findings = extract_abnormal_entities(case, gateway, runtime.graph)
        stage = "hypothesize"
        hypotheses = generate_hypotheses(case, findings, gateway, k_max=config.k_max)
        stage = "evidence"
        packages = [
            build_initial_package(
                case, findings, hypothesis, runtime.graph, runtime.index,
                runtime.scorer, gateway, k=config.k, n=config.n,
                h_max=config.h_max, batch_size=config.prune_batch)
            for hypothesis in hypotheses
        ]
        stage = "route"
        verdict = assess_complexity(case, findings, hypotheses, gateway)
        if verdict.flag is ComplexityFlag.SIMPLE:
            stage = "direct_diagnosis"
            report = generalist_direct_diagnosis(case, findings, hypotheses,
                                                 packages, gateway)
        else:
            stage = "dispatch"
            rosters = [
                dispatch_specialists(case, findings, hypothesis, gateway,
                                     roster=config.roster,
                                     max_specialists=config.max_specialists)
                for hypothesis in hypotheses
            ]
            stage = "deliberate"
            snapshots = run_deliberation_loop(
                case, findings, hypotheses, packages, rosters, runtime.graph,
                runtime.index, runtime.scorer, gateway,
                tau_suff=config.tau_suff, tau_high=config.tau_high,
                t_max=config.t_max, k=config.k, n=config.n,
                h_max=config.h_max, batch_size=config.prune_batch)
            stage = "adjudicate"
            report = final_adjudication(snapshots, case, findings, hypotheses,
                                        gateway)
        return report, trace
    except EngineError as exc:
        raise CaseFailure(case.case_id, stage, exc) from exc
    finally:
        if write_trace:
            config.output_dir.mkdir(parents=True, exist_ok=True)
            trace.write(trace_path_for(config, case.case_id))


def resolve_diagnosis_label(graph: KnowledgeGraph, text: str) -> str | None:
    """Canonical concept id for a diagnosis string, via the exact-match tiers
    only. Fuzzy token overlap is deliberately excluded: label equivalence must
    never ride on partial word matches between disease names."""
    if not text.strip():
        return None
    matches = graph.match_entity(text, limit=1)
    if matches and matches[0].kind in ("exact_name", "exact_synonym"):
        return matches[0].concept.id
    return None


def diagnoses_agree(graph: KnowledgeGraph, truth: str, predicted: str) -> bool:
    """A prediction counts as correct when both strings resolve to the same
    vocabulary concept; strings outside the vocabulary fall back to casefolded
    equality. Evaluation labels can therefore be stored as concept synonyms
    that never surface in any prompt."""
    truth_id = resolve_diagnosis_label(graph, truth)
    predicted_id = resolve_diagnosis_label(graph, predicted)
    if truth_id is not None and predicted_id is not None:
        return truth_id == predicted_id
    return truth.casefold() == predicted.casefold()


@dataclass(frozen=True)
class CaseRow:
    case_id: str
    status: str
    final_diagnosis: str | None = None
    ground_truth: str | None = None
    correct: bool | None = None
    failed_stage: str | None = None
    error: str | None = None
    trace_digest: str | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class BatchResult:
    rows: list[CaseRow]
    metrics: MetricsReport
    failed: int

    @property
    def ok(self) -> bool:
        return self.failed == 0


def run_batch(runtime: Runtime) -> BatchResult:
    """Run every case in the config's case file.

    Failures become rows, not batch aborts. Weighted metrics cover the
    successfully diagnosed cases that carry a ground-truth label.
    """
    config = runtime.config
    cases = read_cases(config.cases_path)
    if not cases:
        raise EmptyCorpusError(f"no cases in {config.cases_path}")
    config.output_dir.mkdir(parents=True, exist_ok=True)

    def one(case: CaseDescription) -> CaseRow:
        try:
            report, trace = run_case(runtime, case)
        except CaseFailure as exc:
            return CaseRow(case_id=case.case_id, status="error",
                           ground_truth=case.ground_truth,
                           failed_stage=exc.stage, error=str(exc.cause))
        return CaseRow(
            case_id=case.case_id, status="ok",
            final_diagnosis=report.final_diagnosis,
            ground_truth=case.ground_truth,
            correct=(diagnoses_agree(runtime.graph, case.ground_truth,
                                     report.final_diagnosis)
                     if case.ground_truth is not None else None),
            trace_digest=trace.digest())

    if config.workers == 1:
        rows = [one(case) for case in cases]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(one, cases))

    # correct predictions collapse onto the truth label so the confusion
    # matrix stays in label vocabulary even when the engine answers with the
    # concept's full preferred name
    pairs = [(row.ground_truth,
              row.ground_truth if row.correct else row.final_diagnosis)
             for row in rows
             if row.status == "ok" and row.ground_truth is not None]
    metrics = weighted_metrics(pairs)
    failed = sum(1 for row in rows if row.status != "ok")

    with open(config.output_dir / "results.jsonl", "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row.to_dict(), ensure_ascii=False) + "\n")
    # cases/correct cover the whole batch; the weighted metrics cover the
    # labeled cases that produced a diagnosis
    summary = metrics.to_dict()
    summary["cases"] = len(rows)
    summary["correct"] = sum(1 for row in rows if row.correct)
    with open(config.output_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, ensure_ascii=False)
        fh.write("\n")
    return BatchResult(rows=rows, metrics=metrics, failed=failed)
