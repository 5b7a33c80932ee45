#!/usr/bin/env python3
"""Build the bundled replay fixtures.

Runs the ten-case corpus against fully scripted chat responses plus local
deterministic embedding and rerank models, recording every exchange into
fixtures/. Afterwards the recorded bundle is replayed twice and the script
checks that both replays reproduce the recorded trace digests and the
expected diagnoses, and that no case's evaluation label ever appears inside
a rendered prompt.

Scripted responses are plain rule tables: a rule matches on the task kind
plus a marker phrase unique to one case narrative (or a predicate over the
prompt pair), so every response is a pure function of the prompt.
"""

from __future__ import annotations

import json
import re
import shutil
import sys
from dataclasses import replace
from pathlib import Path

from dxcouncil.backends import (
    HashEmbedder,
    LexicalOverlapScorer,
    RecordingEmbedder,
    RecordingScorer,
)
from dxcouncil.config import BackendMode, RunConfig, validate_config
from dxcouncil.gateway import RecordingBackend, ScriptedResponder, TranscriptRecorder
from dxcouncil.runner import Runtime, run_batch, trace_path_for
from dxcouncil.templates import TaskKind
from dxcouncil.trace import Trace, scan_for_leakage

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
SCRATCH = ROOT / "runs"


def op(stance: str, confidence: float, sufficiency: str, justification: str) -> dict:
    return {"stance": stance, "confidence": confidence,
            "sufficiency": sufficiency, "justification": justification}


# Each entry scripts one case end to end. "marker" is a phrase unique to that
# case's narrative; every rule for the case keys on it. Complex cases carry
# one panel per hypothesis: an invited roster, one opinion set per round, and
# optionally refinement queries issued after a given round.
CASES: list[dict] = [
    {
        "case_id": "case-01",
        "marker": "annual wellness visit",
        "mentions": ["anechoic liver lesion on ultrasound"],
        "hypotheses": ["Liver cyst", "Hepatic hemangioma"],
        "complexity": "SIMPLE",
        "direct": (
            "Liver cyst",
            "An anechoic thin-walled lesion with posterior enhancement and normal "
            "liver biochemistry is a simple liver cyst; the vascular alternative "
            "would appear bright on ultrasound.\n"
            "Next steps: no treatment needed; repeat ultrasound in twelve months "
            "for reassurance."),
    },
    {
        "case_id": "case-02",
        "marker": "amoxicillin-clavulanate three weeks ago",
        "mentions": ["jaundice", "elevated serum creatinine", "skin rash"],
        "hypotheses": ["Drug-induced liver injury", "Autoimmune hepatitis"],
        "complexity": "COMPLEX",
        "panels": {
            "Drug-induced liver injury": {
                "roster": ["Hepatology", "Nephrology", "Dermatology"],
                "rounds": [{
                    "Hepatology": op("S", 0.92, "Suf",
                        "The interval between the recent antibiotic course and the "
                        "cholestatic jaundice fits an adverse drug reaction of the liver."),
                    "Nephrology": op("S", 0.78, "Suf",
                        "The raised creatinine is consistent with renal involvement "
                        "of a systemic drug reaction."),
                    "Dermatology": op("S", 0.85, "Suf",
                        "The maculopapular eruption fits a drug hypersensitivity pattern."),
                }],
            },
            "Autoimmune hepatitis": {
                "roster": ["Hepatology", "Immunology"],
                "rounds": [{
                    "Hepatology": op("O", 0.80, "Suf",
                        "No autoantibody data support an autoimmune process and the "
                        "medication timeline explains the picture."),
                    "Immunology": op("N", 0.55, "Suf",
                        "Without autoantibody panels or immunoglobulin levels nothing "
                        "actively favors an autoimmune process."),
                }],
            },
        },
        "final": (
            "Drug-induced liver injury",
            "The panel unanimously supports an adverse reaction to "
            "amoxicillin-clavulanate as the cause of the jaundice, rash, and renal "
            "impairment, and found no support for an autoimmune process.\n"
            "Next steps: stop the offending antibiotic, repeat the liver panel and "
            "creatinine within one week, and refer to hepatology."),
    },
    {
        "case_id": "case-03",
        "marker": "triathlon training program",
        "mentions": ["hyperechoic liver lesion on ultrasound",
                     "right upper quadrant pain"],
        "hypotheses": ["Hepatic hemangioma", "Hepatocellular carcinoma"],
        "complexity": "SIMPLE",
        "direct": (
            "Hepatic hemangioma",
            "A well-demarcated hyperechoic lesion with normal liver biochemistry "
            "and a normal alpha-fetoprotein is most consistent with a benign "
            "vascular lesion rather than a malignancy.\n"
            "Next steps: confirmatory contrast-enhanced imaging; no intervention "
            "if the pattern is typical."),
    },
    {
        "case_id": "case-04",
        "marker": "retired schoolteacher",
        "mentions": ["pruritus", "fatigue", "elevated alkaline phosphatase",
                     "antimitochondrial antibody positivity",
                     "elevated immunoglobulin M"],
        "hypotheses": ["Primary biliary cholangitis",
                       "Primary sclerosing cholangitis"],
        "complexity": "COMPLEX",
        "panels": {
            "Primary biliary cholangitis": {
                "roster": ["Hepatology", "Immunology", "Gastroenterology",
                           "Hematology"],
                "rounds": [
                    {
                        "Hepatology": op("S", 0.85, "Ins",
                            "The cholestatic enzyme pattern fits primary biliary "
                            "cholangitis, but I need the guideline threshold for "
                            "antimitochondrial antibody titers."),
                        "Immunology": op("S", 0.80, "Ins",
                            "Antimitochondrial antibody positivity is highly "
                            "specific, though the significance of this titer needs "
                            "guideline confirmation."),
                        "Gastroenterology": op("N", 0.50, "Ins",
                            "I cannot exclude an overlapping large duct process "
                            "without cholangiographic criteria."),
                        "Hematology": op("N", 0.45, "Ins",
                            "The raised immunoglobulin M needs interpretation "
                            "against laboratory reference criteria."),
                    },
                    {
                        "Hepatology": op("S", 0.90, "Suf",
                            "The retrieved criteria confirm that this antibody "
                            "titer with a cholestatic pattern meets the diagnostic "
                            "threshold."),
                        "Immunology": op("S", 0.85, "Suf",
                            "The titer excerpt settles the antibody interpretation "
                            "in favor of primary biliary cholangitis."),
                        "Gastroenterology": op("S", 0.70, "Suf",
                            "With the cholangiographic criteria retrieved and no "
                            "duct dilation on ultrasound, a large duct process is "
                            "adequately excluded."),
                        "Hematology": op("N", 0.50, "Suf",
                            "The immunoglobulin M elevation is supportive but "
                            "nonspecific on its own."),
                    },
                ],
                # issued after round 0; names no finding, so the supplement is
                # guideline-only
                "refine": {0: ("guideline threshold for antimitochondrial antibody titers", [
                    "significant antimitochondrial antibody titer threshold in "
                    "primary biliary cholangitis",
                    "cholangiography criteria distinguishing primary sclerosing "
                    "cholangitis",
                ])},
            },
            "Primary sclerosing cholangitis": {
                "roster": ["Hepatology", "Gastroenterology"],
                "rounds": [{
                    "Hepatology": op("O", 0.75, "Suf",
                        "Antimitochondrial antibody positivity points away from "
                        "primary sclerosing cholangitis."),
                    "Gastroenterology": op("O", 0.70, "Suf",
                        "No cholangiographic stricturing is described to support "
                        "primary sclerosing cholangitis."),
                }],
            },
        },
        "final": (
            "Primary biliary cholangitis",
            "The panel converged on primary biliary cholangitis on the basis of "
            "the cholestatic enzyme pattern, the significant antimitochondrial "
            "antibody titer, and the supportive immunoglobulin M elevation, with "
            "a large duct process adequately excluded.\n"
            "Next steps: start ursodeoxycholic acid and reassess liver "
            "biochemistry in twelve weeks."),
    },
    {
        "case_id": "case-05",
        "marker": "pre-employment screening",
        "mentions": ["hepatitis B surface antigen positivity",
                     "high hepatitis B virus DNA level",
                     "elevated alanine aminotransferase"],
        "hypotheses": ["Chronic hepatitis B"],
        "complexity": "SIMPLE",
        "direct": (
            "Chronic hepatitis B",
            "Persistent surface antigen positivity with a high viral load and "
            "raised alanine aminotransferase establishes chronic hepatitis B "
            "infection in the active phase.\n"
            "Next steps: quantify the viral load trend, assess fibrosis, and "
            "evaluate for antiviral therapy."),
    },
    {
        "case_id": "case-06",
        "marker": "carrier of hepatitis B for two decades",
        "mentions": ["liver mass on imaging", "elevated alpha-fetoprotein",
                     "hepatitis B surface antigen positivity",
                     "unintentional weight loss"],
        "hypotheses": ["Hepatocellular carcinoma", "Hepatic hemangioma",
                       "Chronic hepatitis B"],
        "complexity": "COMPLEX",
        "panels": {
            "Hepatocellular carcinoma": {
                "roster": ["Hepatology", "Oncology"],
                "rounds": [{
                    "Hepatology": op("S", 0.95, "Suf",
                        "A liver mass with a markedly raised alpha-fetoprotein in a "
                        "longstanding hepatitis B carrier is classic for a primary "
                        "liver malignancy."),
                    "Oncology": op("S", 0.92, "Suf",
                        "The tumor marker elevation with weight loss strongly "
                        "supports a primary liver malignancy."),
                }],
            },
            "Hepatic hemangioma": {
                "roster": ["Hepatology", "Oncology"],
                "rounds": [{
                    "Hepatology": op("O", 0.85, "Suf",
                        "The imaging describes a solid mass rather than the "
                        "well-demarcated bright lesion typical of a benign "
                        "vascular lesion."),
                    "Oncology": op("O", 0.80, "Suf",
                        "A benign vascular lesion would not raise "
                        "alpha-fetoprotein or cause weight loss."),
                }],
            },
            "Chronic hepatitis B": {
                "roster": ["Hepatology", "Infectious Disease"],
                "rounds": [{
                    "Hepatology": op("N", 0.60, "Suf",
                        "Chronic hepatitis B is present but does not by itself "
                        "explain the mass or the marker rise."),
                    "Infectious Disease": op("S", 0.65, "Suf",
                        "Ongoing hepatitis B infection is confirmed by persistent "
                        "surface antigen positivity."),
                }],
            },
        },
        "final": (
            "Hepatocellular carcinoma",
            "The panel attributes the mass and the alpha-fetoprotein rise to a "
            "primary liver malignancy arising on chronic hepatitis B, which "
            "remains present as the underlying condition.\n"
            "Next steps: contrast-enhanced imaging for staging and referral to "
            "the liver tumor board."),
    },
    {
        "case_id": "case-07",
        "marker": "desk job and long commute",
        "mentions": ["obesity", "hepatic steatosis on ultrasound",
                     "elevated alanine aminotransferase"],
        "hypotheses": ["Nonalcoholic steatohepatitis", "Alcoholic hepatitis"],
        "complexity": "SIMPLE",
        "direct": (
            "Nonalcoholic steatohepatitis",
            "Steatosis on imaging with raised alanine aminotransferase, a high "
            "body mass index, and negligible alcohol intake points to "
            "nonalcoholic steatohepatitis over an alcohol-related process.\n"
            "Next steps: structured weight reduction and repeat liver enzymes in "
            "three months."),
    },
    {
        "case_id": "case-08",
        "marker": "progressive abdominal distension over four months",
        "mentions": ["ascites", "splenomegaly", "thrombocytopenia", "jaundice",
                     "hepatitis B surface antigen positivity"],
        "hypotheses": ["Liver cirrhosis", "Chronic hepatitis B"],
        "complexity": "COMPLEX",
        "panels": {
            # the panel stays insufficient every round, so the loop runs to the
            # iteration budget: three rounds, two evidence merges
            "Liver cirrhosis": {
                "roster": ["Hepatology", "Gastroenterology"],
                "rounds": [
                    {
                        "Hepatology": op("S", 0.80, "Ins",
                            "The portal hypertension signs fit cirrhosis, but I "
                            "need the staging criteria for decompensating events."),
                        "Gastroenterology": op("N", 0.50, "Ins",
                            "The distension could reflect another cause of raised "
                            "portal pressure and the variceal status is unknown."),
                    },
                    {
                        "Hepatology": op("S", 0.85, "Ins",
                            "The staging excerpt supports decompensated cirrhosis, "
                            "but the mechanistic contribution of the fluid "
                            "accumulation needs confirmation."),
                        "Gastroenterology": op("N", 0.55, "Ins",
                            "I still want the mechanistic chain from the abdominal "
                            "fluid before committing."),
                    },
                    {
                        "Hepatology": op("S", 0.90, "Ins",
                            "The mechanism is now documented, though histological "
                            "staging would complete the picture."),
                        "Gastroenterology": op("N", 0.60, "Ins",
                            "Endoscopic confirmation of portal hypertension is "
                            "still outstanding."),
                    },
                ],
                "refine": {
                    0: ("staging criteria for decompensating events", [
                        "staging criteria for decompensated cirrhosis",
                        "causes of raised portal pressure other than cirrhosis",
                    ]),
                    # names the ascites finding, forcing path re-enumeration in
                    # the supplement
                    1: ("mechanistic chain from the abdominal fluid", [
                        "mechanism linking ascites to liver cirrhosis",
                        "management of ascites in decompensated liver disease",
                    ]),
                },
            },
            "Chronic hepatitis B": {
                "roster": ["Hepatology", "Infectious Disease"],
                "rounds": [{
                    "Hepatology": op("N", 0.60, "Suf",
                        "Surface antigen positivity confirms chronic infection "
                        "but the decompensation dominates the picture."),
                    "Infectious Disease": op("S", 0.70, "Suf",
                        "Chronic hepatitis B infection is present and is the "
                        "likely underlying etiology."),
                }],
            },
        },
        "final": (
            "Liver cirrhosis",
            "The panel concludes that the ascites, splenomegaly, and "
            "thrombocytopenia reflect cirrhosis with portal hypertension, most "
            "likely on the basis of longstanding chronic hepatitis B infection.\n"
            "Next steps: endoscopic screening for varices, sodium restriction "
            "with diuretics, and staging laboratory work."),
    },
    {
        "case_id": "case-09",
        "marker": "vomiting bright red blood",
        "mentions": ["hematemesis", "melena", "esophageal varices on endoscopy",
                     "ascites"],
        "hypotheses": ["Esophagogastric variceal bleeding", "Liver cirrhosis"],
        "complexity": "SIMPLE",
        "direct": (
            "Esophagogastric variceal bleeding",
            "Hematemesis and melena with large varices bearing stigmata of "
            "recent bleeding in a patient with chronic liver disease establish "
            "variceal hemorrhage as the source.\n"
            "Next steps: urgent endoscopic band ligation with vasoactive therapy "
            "and antibiotic prophylaxis."),
    },
    {
        "case_id": "case-10",
        "marker": "college senior",
        "mentions": ["fatigue", "elevated alanine aminotransferase",
                     "antinuclear antibody positivity",
                     "elevated immunoglobulin G", "jaundice"],
        "hypotheses": ["Autoimmune hepatitis", "Drug-induced liver injury",
                       "Primary biliary cholangitis"],
        "complexity": "COMPLEX",
        "panels": {
            "Autoimmune hepatitis": {
                "roster": ["Hepatology", "Immunology", "Gastroenterology"],
                "rounds": [
                    {
                        "Hepatology": op("S", 0.85, "Suf",
                            "The marked transaminase rise with antinuclear "
                            "antibody positivity fits an autoimmune process in a "
                            "young woman."),
                        "Immunology": op("N", 0.60, "Ins",
                            "I need the simplified scoring criteria weighting "
                            "immunoglobulin G before committing."),
                        "Gastroenterology": op("N", 0.55, "Ins",
                            "The guideline threshold for the autoantibody titer "
                            "is missing from the evidence."),
                    },
                    {
                        "Hepatology": op("S", 0.92, "Suf",
                            "The scoring excerpt confirms the criteria are met."),
                        "Immunology": op("S", 0.95, "Suf",
                            "With the simplified score retrieved, the antibody "
                            "positivity and raised immunoglobulin G are decisive."),
                        "Gastroenterology": op("S", 0.90, "Suf",
                            "The titer threshold is documented and met, so I "
                            "support the diagnosis."),
                    },
                ],
                "refine": {0: ("simplified scoring criteria weighting immunoglobulin G", [
                    "simplified diagnostic score for autoimmune hepatitis",
                    "autoantibody titer threshold supporting autoimmune hepatitis",
                ])},
            },
            "Drug-induced liver injury": {
                "roster": ["Hepatology", "Gastroenterology"],
                "rounds": [{
                    "Hepatology": op("O", 0.80, "Suf",
                        "No medication or supplement exposure is reported, which "
                        "undermines a drug cause."),
                    "Gastroenterology": op("O", 0.75, "Suf",
                        "Without any hepatotoxic exposure the drug explanation "
                        "has no anchor."),
                }],
            },
            "Primary biliary cholangitis": {
                "roster": ["Hepatology", "Immunology"],
                "rounds": [{
                    "Hepatology": op("O", 0.70, "Suf",
                        "Antimitochondrial antibodies are not reported and the "
                        "enzyme pattern is hepatocellular rather than cholestatic."),
                    "Immunology": op("N", 0.50, "Suf",
                        "The antibody profile reported does not include the "
                        "mitochondrial specificity expected here."),
                }],
            },
        },
        "final": (
            "Autoimmune hepatitis",
            "The panel supports autoimmune hepatitis on the basis of the marked "
            "transaminase rise, antinuclear antibody positivity at a significant "
            "titer, and the elevated immunoglobulin G meeting the simplified "
            "diagnostic criteria.\n"
            "Next steps: liver biopsy for histological confirmation and "
            "initiation of corticosteroid therapy."),
    },
]


# -- generic scripted responders ---------------------------------------------

_RELATION_PHRASE = {
    "indicates": "is an indicator of",
    "marker_of": "is a recognized marker of",
    "feature_of": "is a characteristic feature of",
    "causes": "can cause",
    "leads_to": "leads to",
    "risk_factor_for": "is a risk factor for",
    "associated_with": "is commonly associated with",
}


def _verbalize(system: str, user: str) -> str:
    chain = re.search(r"Relation chain:\n(.+)", user).group(1).strip()
    parts = re.split(r" --\[([a-z_]+)\]--> ", chain)
    sentence = parts[0]
    for i in range(1, len(parts), 2):
        joint = " " if i == 1 else ", which "
        sentence += f"{joint}{_RELATION_PHRASE[parts[i]]} {parts[i + 1]}"
    return sentence + "."


def _prune(system: str, user: str) -> str:
    match = re.search(r"Candidate explanations \((\d+) total\):\n", user)
    count = int(match.group(1))
    lines = user[match.end():].split("\n")[:count]
    # one scripted audit rule: jaundice alone is rejected as support for
    # primary biliary cholangitis
    bits = ["0" if ("Jaundice" in line and "Primary biliary cholangitis" in line)
            else "1" for line in lines]
    return ",".join(bits)


def _interim(system: str, user: str) -> str:
    hyp = re.search(r"Candidate diagnosis: (.+)", user).group(1)
    rnd = re.search(r"Deliberation round: (\d+)", user).group(1)
    support = re.search(r"Support score: ([0-9.]+)", user).group(1)
    insufficiency = re.search(r"Insufficiency ratio: ([0-9.]+)", user).group(1)
    report = (f"After round {rnd} the panel's support for {hyp} stands at "
              f"{support} with an insufficiency ratio of {insufficiency}.")
    return json.dumps({"report": report})


def _dispatch_pred(marker: str, hypothesis: str):
    want = f"Candidate diagnosis under review: {hypothesis}\n"
    return lambda system, user: marker in user and want in user


def _opinion_pred(marker: str, hypothesis: str, rnd: int, specialty: str):
    who = f"consulting {specialty} specialist"
    what = f"Candidate diagnosis: {hypothesis}\n"
    when = f"Deliberation round: {rnd}\n"
    return lambda system, user: (who in system and marker in user
                                 and what in user and when in user)


def _refine_pred(marker: str, hypothesis: str, gap_sig: str):
    head = f"Candidate diagnosis: {hypothesis}\n"
    return lambda system, user: (user.startswith(head) and marker in user
                                 and gap_sig in user)


def build_rules() -> list:
    rules: list = []
    for case in CASES:
        marker = case["marker"]
        rules.append((TaskKind.NER, marker, json.dumps(case["mentions"])))
        rules.append((TaskKind.HYPOTHESIZE, marker, json.dumps(case["hypotheses"])))
        rules.append((TaskKind.ASSESS_COMPLEXITY, marker, case["complexity"]))
        if case["complexity"] == "SIMPLE":
            diagnosis, report = case["direct"]
            rules.append((TaskKind.GENERALIST_DIRECT, marker,
                          json.dumps({"diagnosis": diagnosis, "report": report})))
            continue
        for hypothesis, panel in case["panels"].items():
            rules.append((TaskKind.DISPATCH, _dispatch_pred(marker, hypothesis),
                          json.dumps(panel["roster"])))
            for rnd, opinions in enumerate(panel["rounds"]):
                for specialty, judgment in opinions.items():
                    rules.append((TaskKind.SPECIALIST_OPINION,
                                  _opinion_pred(marker, hypothesis, rnd, specialty),
                                  json.dumps(judgment)))
            for rnd, (gap_sig, queries) in panel.get("refine", {}).items():
                rules.append((TaskKind.REFINE_QUERY,
                              _refine_pred(marker, hypothesis, gap_sig),
                              json.dumps(queries)))
        diagnosis, report = case["final"]
        rules.append((TaskKind.FINAL_ADJUDICATE, marker,
                      json.dumps({"diagnosis": diagnosis, "report": report})))
    rules.extend([
        (TaskKind.ALIGN, "", "1"),  # scripted mentions match their concept exactly
        (TaskKind.VERBALIZE, "", _verbalize),
        (TaskKind.PRUNE, "", _prune),
        (TaskKind.INTERIM_CONSENSUS, "", _interim),
    ])
    return rules


# -- record / verify ----------------------------------------------------------

def fixture_config(mode: BackendMode, out_name: str) -> RunConfig:
    return RunConfig(
        concepts_path=FIXTURES / "concepts.tsv",
        triples_path=FIXTURES / "triples.tsv",
        corpus_path=FIXTURES / "guidelines.jsonl",
        cases_path=FIXTURES / "cases.jsonl",
        mode=mode,
        output_dir=SCRATCH / out_name,
        transcript_path=FIXTURES / "transcript.jsonl",
        embeddings_path=FIXTURES / "embeddings.jsonl",
        scores_path=FIXTURES / "scores.jsonl",
    )


def record() -> dict[str, dict]:
    for name in ("transcript.jsonl", "embeddings.jsonl", "scores.jsonl"):
        (FIXTURES / name).unlink(missing_ok=True)
    config = fixture_config(BackendMode.RECORD, "fixture-record")
    shutil.rmtree(config.output_dir, ignore_errors=True)
    recorder = TranscriptRecorder(config.transcript_path)
    chat = RecordingBackend(ScriptedResponder(build_rules()), recorder)
    embedder = RecordingEmbedder(HashEmbedder(), config.embeddings_path)
    scorer = RecordingScorer(LexicalOverlapScorer(), config.scores_path)
    runtime = Runtime(config, chat_backend=chat, embedder=embedder, scorer=scorer)
    try:
        result = run_batch(runtime)
    finally:
        recorder.close()
        embedder.close()
        scorer.close()
    bad = [row for row in result.rows if row.status != "ok"]
    if bad:
        for row in bad:
            print(f"  {row.case_id}: failed at {row.failed_stage}: {row.error}")
        raise SystemExit("recording run had case failures")
    lint_traces(config)
    return {row.case_id: {"digest": row.trace_digest,
                          "diagnosis": row.final_diagnosis}
            for row in result.rows}


def lint_traces(config: RunConfig) -> None:
    labels = [json.loads(line)["ground_truth"]
              for line in (FIXTURES / "cases.jsonl").read_text().splitlines()]
    for case in CASES:
        trace = Trace.load(trace_path_for(config, case["case_id"]))
        hits = scan_for_leakage(trace, labels)
        if hits:
            raise SystemExit(
                f"label leaked into prompts of {case['case_id']}: {hits[:3]}")


def replay(out_name: str) -> dict[str, dict]:
    config = validate_config(FIXTURES / "replay_config.yaml")
    config = replace(config, output_dir=SCRATCH / out_name)
    shutil.rmtree(config.output_dir, ignore_errors=True)
    runtime = Runtime(config)
    try:
        result = run_batch(runtime)
    finally:
        runtime.close()
    bad = [row for row in result.rows if row.status != "ok"]
    if bad:
        for row in bad:
            print(f"  {row.case_id}: failed at {row.failed_stage}: {row.error}")
        raise SystemExit(f"replay run {out_name} had case failures")
    return {row.case_id: {"digest": row.trace_digest,
                          "diagnosis": row.final_diagnosis}
            for row in result.rows}


def main() -> int:
    print("recording scripted run ...")
    recorded = record()
    print(f"  {len(recorded)} cases recorded, prompts clean of labels")

    print("replaying recorded bundle twice ...")
    first = replay("fixture-replay-a")
    second = replay("fixture-replay-b")

    expected = {case["case_id"]: (case.get("direct") or case["final"])[0]
                for case in CASES}
    problems = []
    for case_id, want in expected.items():
        digests = {recorded[case_id]["digest"], first[case_id]["digest"],
                   second[case_id]["digest"]}
        if len(digests) != 1:
            problems.append(f"{case_id}: trace digest drifted across runs")
        for run in (recorded, first, second):
            if run[case_id]["diagnosis"] != want:
                problems.append(f"{case_id}: diagnosis {run[case_id]['diagnosis']!r}"
                                f" != expected {want!r}")
    if problems:
        for problem in problems:
            print("  " + problem)
        return 1

    with open(FIXTURES / "expected_diagnoses.json", "w", encoding="utf-8") as fh:
        json.dump(expected, fh, indent=2, ensure_ascii=False)
        fh.write("\n")
    print("  digests stable, diagnoses as scripted")
    print("fixture bundle written to", FIXTURES)
    return 0


if __name__ == "__main__":
    sys.exit(main())
