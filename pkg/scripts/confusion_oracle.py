#!/usr/bin/env python3
"""Standalone confusion-matrix cross-check for batch evaluation numbers.

Builds the full truth-by-prediction matrix and derives support-weighted
precision, recall, F1, and F0.5 from row and column sums alone. Kept
deliberately separate from the package so the two implementations can be
compared against each other in tests.

Usage:
    python3 scripts/confusion_oracle.py runs/replay/results.jsonl
    python3 scripts/confusion_oracle.py pairs.json
"""

from __future__ import annotations

import json
import sys
from collections import defaultdict


def build_matrix(pairs: list[tuple[str, str]]) -> dict[str, dict[str, int]]:
    """Nested counts: matrix[truth][predicted] = occurrences."""
    matrix: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))
    for truth, predicted in pairs:
        matrix[truth][predicted] += 1
    return {t: dict(row) for t, row in matrix.items()}


def matrix_metrics(matrix: dict[str, dict[str, int]]) -> dict[str, float]:
    """Weighted metrics on a 0-100 scale, from matrix marginals.

    Per truth class c: tp is the diagonal cell, fn is the rest of the row,
    fp is the rest of the column. Classes that only ever appear as
    predictions have zero support and therefore zero weight.
    """
    total = sum(sum(row.values()) for row in matrix.values())
    if total == 0:
        raise ValueError("empty matrix")
    col_sums: dict[str, int] = defaultdict(int)
    for row in matrix.values():
        for predicted, count in row.items():
            col_sums[predicted] += count

    correct = 0
    w_precision = w_recall = w_f1 = w_f05 = 0.0
    for truth, row in matrix.items():
        tp = row.get(truth, 0)
        fn = sum(row.values()) - tp
        fp = col_sums[truth] - tp
        correct += tp
        support = tp + fn
        weight = support / total
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        w_precision += weight * precision
        w_recall += weight * recall
        for beta, sink in ((1.0, "f1"), (0.5, "f05")):
            b2 = beta * beta
            denom = b2 * precision + recall
            score = (1 + b2) * precision * recall / denom if denom else 0.0
            if sink == "f1":
                w_f1 += weight * score
            else:
                w_f05 += weight * score

    return {
        "cases": total,
        "correct": correct,
        "weighted_precision": 100.0 * w_precision,
        "weighted_recall": 100.0 * w_recall,
        "weighted_f1": 100.0 * w_f1,
        "weighted_f05": 100.0 * w_f05,
    }


def score_pairs(pairs: list[tuple[str, str]]) -> dict[str, float]:
    return matrix_metrics(build_matrix(pairs))


def read_pairs(path: str) -> list[tuple[str, str]]:
    """Pairs from a batch results.jsonl (ok rows with a label) or from a
    plain JSON list of [truth, predicted] pairs."""
    if path.endswith(".jsonl"):
        pairs = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                row = json.loads(line)
                if row.get("status") != "ok" or row.get("ground_truth") is None:
                    continue
                predicted = (row["ground_truth"] if row.get("correct")
                             else row["final_diagnosis"])
                pairs.append((row["ground_truth"], predicted))
        return pairs
    with open(path, encoding="utf-8") as fh:
        return [(truth, predicted) for truth, predicted in json.load(fh)]


def main(argv: list[str]) -> int:
    if len(argv) != 1:
        print(__doc__.strip(), file=sys.stderr)
        return 2
    pairs = read_pairs(argv[0])
    if not pairs:
        print("no scored pairs found", file=sys.stderr)
        return 1
    report = score_pairs(pairs)
    for key in ("cases", "correct"):
        print(f"{key}: {report[key]}")
    for key in ("weighted_precision", "weighted_recall",
                "weighted_f1", "weighted_f05"):
        print(f"{key}: {report[key]:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
