"""Strict parsers from free-text model responses to typed payloads.

Each task kind declares one grammar. Anything outside it is a parse error
that quotes the offending span; nothing falls back to a silent default, so
model drift shows up as a visible failure instead of a wrong diagnosis.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .errors import (
    CardinalityError,
    ConfidenceRangeError,
    EmptyQueryListError,
    JudgmentLengthError,
    JudgmentParseError,
)
from .templates import TaskKind

STANCES = ("S", "N", "O")
SUFFICIENCY = ("Suf", "Ins")

_INDEX = re.compile(r"^\d+$")


@dataclass(frozen=True)
class StructuredJudgment:
    kind: TaskKind
    raw: str
    payload: object


def _json_load(text: str, expect: type) -> object:
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise JudgmentParseError(f"response is not valid JSON: {exc.msg}",
                                 span=text) from exc
    if not isinstance(value, expect):
        raise JudgmentParseError(
            f"expected JSON {expect.__name__}, got {type(value).__name__}", span=text)
    return value


def _string_array(text: str, allow_empty_items: bool = False) -> list[str]:
    items = _json_load(text, list)
    out: list[str] = []
    for item in items:
        if not isinstance(item, str):
            raise JudgmentParseError("array items must be strings", span=repr(item))
        if not item.strip() and not allow_empty_items:
            raise JudgmentParseError("array items must be non-empty", span=text)
        out.append(item)
    return out


def _parse_opinion(text: str) -> dict:
    obj = _json_load(text, dict)
    required = {"stance", "confidence", "sufficiency", "justification"}
    if set(obj) != required:
        raise JudgmentParseError(
            f"opinion object must have exactly keys {sorted(required)}, "
            f"got {sorted(obj)}", span=text)
    if obj["stance"] not in STANCES:
        raise JudgmentParseError(f"stance must be one of {STANCES}",
                                 span=repr(obj["stance"]))
    if obj["sufficiency"] not in SUFFICIENCY:
        raise JudgmentParseError(f"sufficiency must be one of {SUFFICIENCY}",
                                 span=repr(obj["sufficiency"]))
    conf = obj["confidence"]
    if isinstance(conf, bool) or not isinstance(conf, (int, float)):
        raise JudgmentParseError("confidence must be a number", span=repr(conf))
    if not 0.0 <= float(conf) <= 1.0:
        raise ConfidenceRangeError(f"confidence {conf} outside [0, 1]", span=repr(conf))
    just = obj["justification"]
    if not isinstance(just, str) or not just.strip():
        raise JudgmentParseError("justification must be a non-empty string",
                                 span=repr(just))
    return {"stance": obj["stance"], "confidence": float(conf),
            "sufficiency": obj["sufficiency"], "justification": just}


def _parse_report(text: str, with_diagnosis: bool) -> dict:
    obj = _json_load(text, dict)
    required = {"diagnosis", "report"} if with_diagnosis else {"report"}
    if set(obj) != required:
        raise JudgmentParseError(
            f"expected exactly keys {sorted(required)}, got {sorted(obj)}", span=text)
    for field in required:
        if not isinstance(obj[field], str) or not obj[field].strip():
            raise JudgmentParseError(f"{field!r} must be a non-empty string", span=text)
    return {k: obj[k] for k in sorted(required)}


def parse_judgment(kind: TaskKind, response_text: str, *,
                   max_items: int | None = None,
                   expected_bits: int | None = None) -> StructuredJudgment:
    """Parse a response against its task's grammar.

    max_items bounds list-valued tasks (differential size, refinement
    queries); expected_bits pins the pruning bit count to the batch size.
    """
    text = response_text.strip()
    payload: object

    if kind is TaskKind.NER:
        payload = _string_array(text)

    elif kind is TaskKind.ALIGN:
        if text == "NONE":
            payload = None
        elif _INDEX.match(text):
            payload = int(text)
        else:
            raise JudgmentParseError("expected a candidate number or NONE", span=text)

    elif kind is TaskKind.HYPOTHESIZE:
        items = _string_array(text)
        if max_items is not None and len(items) > max_items:
            raise CardinalityError(
                f"{len(items)} diagnoses exceed the maximum of {max_items}", span=text)
        payload = items

    elif kind is TaskKind.VERBALIZE:
        if not text:
            raise JudgmentParseError("verbalization is empty", span=response_text)
        payload = text

    elif kind is TaskKind.PRUNE:
        tokens = [t.strip() for t in text.split(",")]
        if any(t not in ("0", "1") for t in tokens):
            raise JudgmentParseError("expected comma-separated 0/1 digits", span=text)
        bits = tuple(int(t) for t in tokens)
        if expected_bits is not None and len(bits) != expected_bits:
            raise JudgmentLengthError(
                f"got {len(bits)} judgments for a batch of {expected_bits}", span=text)
        payload = bits

    elif kind is TaskKind.ASSESS_COMPLEXITY:
        if text not in ("SIMPLE", "COMPLEX"):
            raise JudgmentParseError("expected SIMPLE or COMPLEX", span=text)
        payload = text

    elif kind is TaskKind.DISPATCH:
        items = _string_array(text)
        if max_items is not None and len(items) > max_items:
            raise CardinalityError(
                f"{len(items)} specialties exceed the maximum of {max_items}", span=text)
        payload = items

    elif kind is TaskKind.SPECIALIST_OPINION:
        payload = _parse_opinion(text)

    elif kind is TaskKind.REFINE_QUERY:
        items = _string_array(text)
        if not items:
            raise EmptyQueryListError("refinement produced no queries")
        limit = 3 if max_items is None else max_items
        if len(items) > limit:
            raise CardinalityError(
                f"{len(items)} refinement queries exceed the maximum of {limit}",
                span=text)
        payload = items

    elif kind is TaskKind.INTERIM_CONSENSUS:
        payload = _parse_report(text, with_diagnosis=False)

    elif kind in (TaskKind.FINAL_ADJUDICATE, TaskKind.GENERALIST_DIRECT):
        payload = _parse_report(text, with_diagnosis=True)

    else:
        raise JudgmentParseError(f"no grammar registered for task {kind!r}")

    return StructuredJudgment(kind=kind, raw=response_text, payload=payload)
