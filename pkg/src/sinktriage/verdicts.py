"""Case classification, confusion counts, metrics, and cost aggregation.

A "Yes" verdict is scored by its security-test outcome; a "No" verdict
is scored against a ground-truth label. Unlabeled "No" cases are
reported as UnverifiedNegative in a side channel rather than silently
counted as true negatives. Invalid cases are excluded from every metric
denominator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DuplicateModelName, InconsistentInput
from .llm import AnalysisVerdict, ParseFailure, RawResponse
from .sandbox import (
    STATUS_CONFIRMED,
    STATUS_INVALID,
    STATUS_REFUTED,
    ExecutionOutcome,
)

CLASS_TP = "TP"
CLASS_FP = "FP"
CLASS_TN = "TN"
CLASS_FN = "FN"
CLASS_INVALID = "Invalid"
CLASS_UNVERIFIED = "UnverifiedNegative"

ALL_CLASSES = (CLASS_TP, CLASS_FP, CLASS_TN, CLASS_FN, CLASS_INVALID, CLASS_UNVERIFIED)

TOTAL_SCOPE = "total"


@dataclass(frozen=True)
class CaseLabel:
    case_id: str
    actually_vulnerable: bool
    source: str = "manual_review"  # manual_review | seeded_fixture


@dataclass(frozen=True)
class ConfusionCounts:
    scope: str
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    invalid: int = 0

    @property
    def n_cases(self) -> int:
        return self.tp + self.fp + self.tn + self.fn + self.invalid

    def cells(self) -> tuple[int, int, int, int]:
        return (self.tp, self.fp, self.tn, self.fn)


@dataclass(frozen=True)
class MetricsSummary:
    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None


@dataclass(frozen=True)
class CostRow:
    case_id: str
    group: str  # e.g. "Yes" / "No"
    loc: int
    response: RawResponse


@dataclass(frozen=True)
class CostRecord:
    scope: str
    cases: int
    loc: int
    wall_time_s: float
    input_tokens: int | None = None
    output_tokens: int | None = None
    dollars: float | None = None


def classify_case(
    v: AnalysisVerdict | ParseFailure,
    o: ExecutionOutcome | None = None,
    l: CaseLabel | None = None,
) -> str:
    """Classify one case. An outcome must accompany exactly the "Yes"
    verdicts; a missing outcome on "Yes" means no runnable test was
    produced and the case is Invalid."""
    if isinstance(v, ParseFailure):
        return CLASS_INVALID
    if not v.vulnerable:
        if o is not None:
            raise InconsistentInput(
                f"{v.case_id}: execution outcome supplied for a 'No' verdict"
            )
        if l is None:
            return CLASS_UNVERIFIED
        return CLASS_FN if l.actually_vulnerable else CLASS_TN
    if o is None or o.status == STATUS_INVALID:
        return CLASS_INVALID
    if o.status == STATUS_CONFIRMED:
        return CLASS_TP
    if o.status == STATUS_REFUTED:
        return CLASS_FP
    raise InconsistentInput(f"{v.case_id}: unknown outcome status {o.status!r}")


def aggregate(
    cases: Sequence[tuple[str, str]],
    by_project: Mapping[str, str] | None = None,
) -> tuple[list[ConfusionCounts], dict[str, int]]:
    """Tally (case_id, class) pairs per project plus a total row.

    Returns (counts, unverified-per-scope); UnverifiedNegative cases are
    excluded from the confusion counts.
    """
    by_project = by_project or {}
    tallies: dict[str, dict[str, int]] = {}
    unverified: dict[str, int] = {}
    for case_id, cls in cases:
        project = by_project.get(case_id, TOTAL_SCOPE)
        for scope in ({project, TOTAL_SCOPE}):
            if cls == CLASS_UNVERIFIED:
                unverified[scope] = unverified.get(scope, 0) + 1
            else:
                tallies.setdefault(scope, {c: 0 for c in ALL_CLASSES[:5]})
                tallies[scope][cls] += 1

    scopes = sorted(s for s in set(tallies) | set(unverified) if s != TOTAL_SCOPE)
    scopes.append(TOTAL_SCOPE)
    counts = []
    for scope in scopes:
        t = tallies.get(scope, {})
        counts.append(
            ConfusionCounts(
                scope=scope,
                tp=t.get(CLASS_TP, 0),
                fp=t.get(CLASS_FP, 0),
                tn=t.get(CLASS_TN, 0),
                fn=t.get(CLASS_FN, 0),
                invalid=t.get(CLASS_INVALID, 0),
            )
        )
    return counts, unverified


def _ratio(num: float, denom: float) -> float | None:
    return num / denom if denom > 0 else None


def compute_metrics(c: ConfusionCounts) -> MetricsSummary:
    """Accuracy, precision, recall, F1 over the valid cases.

    A metric whose denominator is zero is reported as None (undefined),
    never as 0. Invalid cases appear in no denominator.
    """
    accuracy = _ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn)
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return MetricsSummary(accuracy, precision, recall, f1)


def aggregate_cost(
    rows: Iterable[CostRow],
    prices: tuple[float, float] | None = None,
) -> list[CostRecord]:
    """Sum wall time, tokens, and dollars per group plus a Total row.

    A case's LOC counts once per group even when it produced several
    responses (analysis + test generation). Token sums are only reported
    when every response in the group carried counts; dollars only when
    prices were configured on top of that.
    """
    groups: dict[str, dict] = {}

    def bucket(name: str) -> dict:
        return groups.setdefault(
            name,
            {"cases": {}, "wall": 0.0, "in": 0, "out": 0, "tokens_complete": True},
        )

    order: list[str] = []
    for row in rows:
        if row.group not in order:
            order.append(row.group)
        for name in (row.group, "Total"):
            b = bucket(name)
            b["cases"].setdefault(row.case_id, row.loc)
            b["wall"] += row.response.latency_s
            if row.response.input_tokens is None or row.response.output_tokens is None:
                b["tokens_complete"] = False
            else:
                b["in"] += row.response.input_tokens
                b["out"] += row.response.output_tokens

    records = []
    for name in order + (["Total"] if groups else []):
        b = groups.get(name)
        if b is None:
            continue
        tokens_ok = b["tokens_complete"] and b["cases"]
        in_tok = b["in"] if tokens_ok else None
        out_tok = b["out"] if tokens_ok else None
        dollars = None
        if prices is not None and tokens_ok:
            dollars = in_tok * prices[0] + out_tok * prices[1]
        records.append(
            CostRecord(
                scope=name,
                cases=len(b["cases"]),
                loc=sum(b["cases"].values()),
                wall_time_s=b["wall"],
                input_tokens=in_tok,
                output_tokens=out_tok,
                dollars=dollars,
            )
        )
    if not records:
        records.append(CostRecord(scope="Total", cases=0, loc=0, wall_time_s=0.0))
    return records


@dataclass(frozen=True)
class ComparisonRow:
    model_name: str
    counts: ConfusionCounts
    metrics: MetricsSummary
    deltas: MetricsSummary  # vs. the reference model


@dataclass(frozen=True)
class ComparisonTable:
    reference: str
    rows: tuple[ComparisonRow, ...]


def _delta(a: float | None, b: float | None) -> float | None:
    if a is None or b is None:
        return None
    return a - b


def compare_models(
    runs: Sequence[tuple[str, ConfusionCounts]],
    reference: str | None = None,
) -> ComparisonTable:
    """Side-by-side metrics for >=2 runs, with deltas vs. a reference."""
    if len(runs) < 2:
        raise ValueError("need at least two runs to compare")
    names = [name for name, _ in runs]
    if len(set(names)) != len(names):
        raise DuplicateModelName(f"duplicate model names in {names}")
    reference = reference or names[0]
    if reference not in names:
        raise ValueError(f"reference model {reference!r} not among runs")
    ref_metrics = compute_metrics(dict(runs)[reference])
    rows = []
    for name, counts in runs:
        m = compute_metrics(counts)
        rows.append(
            ComparisonRow(
                model_name=name,
                counts=counts,
                metrics=m,
                deltas=MetricsSummary(
                    accuracy=_delta(m.accuracy, ref_metrics.accuracy),
                    precision=_delta(m.precision, ref_metrics.precision),
                    recall=_delta(m.recall, ref_metrics.recall),
                    f1=_delta(m.f1, ref_metrics.f1),
                ),
            )
        )
    return ComparisonTable(reference=reference, rows=tuple(rows))


# ---------------------------------------------------------------------------
# label file IO: JSON Lines {"case_id", "actually_vulnerable", "source"}

def read_labels_jsonl(path: str | Path) -> dict[str, CaseLabel]:
    labels: dict[str, CaseLabel] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            label = CaseLabel(
                case_id=d["case_id"],
                actually_vulnerable=bool(d["actually_vulnerable"]),
                source=d.get("source", "manual_review"),
            )
            if label.case_id in labels:
                raise ValueError(f"duplicate label for {label.case_id}")
            labels[label.case_id] = label
    return labels


def write_labels_jsonl(labels: Iterable[CaseLabel], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for l in labels:
            fh.write(
                json.dumps(
                    {
                        "case_id": l.case_id,
                        "actually_vulnerable": l.actually_vulnerable,
                        "source": l.source,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
