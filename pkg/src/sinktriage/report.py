"""Render run results as JSON, Markdown, and a per-case CSV table.

The Markdown summary mirrors the evaluation tables (per-project
confusion counts, metrics, costs, model comparison) plus a per-case
appendix. Percentages are rounded to one decimal; every numeric cell
equals the corresponding render_json value after that rounding.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .baseline import BaselineFinding
from .corpus import FileManifest, SkippedFile
from .extract import (
    CandidateSet,
    candidate_from_dict,
    candidate_to_dict,
)
from .llm import AnalysisVerdict, ParseFailure, RawResponse
from .sandbox import ExecutionOutcome, outcome_from_dict, outcome_to_dict
from .testgen import SecurityTest
from .verdicts import (
    CaseLabel,
    ComparisonRow,
    ComparisonTable,
    ConfusionCounts,
    CostRecord,
    MetricsSummary,
)

RUN_JSON = "run.json"
SUMMARY_MD = "summary.md"
CASES_CSV = "cases.csv"

CASE_TABLE_COLUMNS = (
    "Project",
    "Case No.",
    "Function",
    "Line of code",
    "Method that may cause vulnerability",
    "Model answer",
    "Test code executable directly?",
    "Reason",
    "Executable with modification?",
    "Actually vulnerable?",
    "Class",
)


@dataclass
class RunResults:
    project: str
    model_name: str
    candidates: CandidateSet
    manifest: FileManifest | None = None
    blindspots: list[tuple[str, str]] = field(default_factory=list)
    verdicts: dict[str, AnalysisVerdict | ParseFailure] = field(default_factory=dict)
    tests: dict[str, SecurityTest] = field(default_factory=dict)
    outcomes: dict[str, ExecutionOutcome] = field(default_factory=dict)
    classes: dict[str, str] = field(default_factory=dict)
    counts: list[ConfusionCounts] = field(default_factory=list)
    unverified: dict[str, int] = field(default_factory=dict)
    metrics: dict[str, MetricsSummary] = field(default_factory=dict)
    costs: list[CostRecord] = field(default_factory=list)
    baseline: dict[str, list[BaselineFinding]] | None = None
    labels: dict[str, CaseLabel] = field(default_factory=dict)
    comparison: ComparisonTable | None = None


def pct(x: float | None) -> str:
    return "n/a" if x is None else f"{100 * x:.1f}%"


def pp_delta(x: float | None) -> str:
    return "n/a" if x is None else f"{100 * x:+.1f}"


# ---------------------------------------------------------------------------
# JSON

def _raw_to_dict(r: RawResponse) -> dict:
    return {
        "text": r.text,
        "latency_s": r.latency_s,
        "input_tokens": r.input_tokens,
        "output_tokens": r.output_tokens,
    }


def _raw_from_dict(d: dict) -> RawResponse:
    return RawResponse(d["text"], d["latency_s"], d.get("input_tokens"), d.get("output_tokens"))


def verdict_to_dict(v: AnalysisVerdict | ParseFailure) -> dict:
    if isinstance(v, ParseFailure):
        return {
            "case_id": v.case_id,
            "vulnerable": None,
            "parse_failure": v.reason,
            "raw": _raw_to_dict(v.raw),
        }
    return {
        "case_id": v.case_id,
        "vulnerable": v.vulnerable,
        "justification": v.justification,
        "raw": _raw_to_dict(v.raw),
    }


def verdict_from_dict(d: dict) -> AnalysisVerdict | ParseFailure:
    if d.get("vulnerable") is None:
        return ParseFailure(d["case_id"], d.get("parse_failure", ""), _raw_from_dict(d["raw"]))
    return AnalysisVerdict(
        d["case_id"], d["vulnerable"], d.get("justification", ""), _raw_from_dict(d["raw"])
    )


def _test_to_dict(t: SecurityTest) -> dict:
    return {
        "case_id": t.case_id,
        "original_code": t.original_code,
        "normalized_code": t.normalized_code,
        "directly_runnable": t.directly_runnable,
        "applied_fixes": list(t.applied_fixes),
        "extraction_note": t.extraction_note,
    }


def _test_from_dict(d: dict) -> SecurityTest:
    return SecurityTest(
        case_id=d["case_id"],
        original_code=d["original_code"],
        normalized_code=d["normalized_code"],
        directly_runnable=d.get("directly_runnable"),
        applied_fixes=tuple(d.get("applied_fixes", [])),
        extraction_note=d.get("extraction_note", ""),
    )


def run_to_dict(run: RunResults) -> dict:
    return {
        "project": run.project,
        "model_name": run.model_name,
        "manifest": json.loads(run.manifest.to_json()) if run.manifest else None,
        "candidates": [candidate_to_dict(c) for c in run.candidates.candidates],
        "extraction_skipped": [
            {"path": s.relative_path, "reason": s.reason} for s in run.candidates.skipped
        ],
        "blindspots": [{"case_id": cid, "reason": r} for cid, r in run.blindspots],
        "verdicts": [verdict_to_dict(run.verdicts[c]) for c in sorted(run.verdicts)],
        "tests": [_test_to_dict(run.tests[c]) for c in sorted(run.tests)],
        "outcomes": [outcome_to_dict(run.outcomes[c]) for c in sorted(run.outcomes)],
        "classes": dict(sorted(run.classes.items())),
        "counts": [
            {
                "scope": c.scope,
                "tp": c.tp,
                "fp": c.fp,
                "tn": c.tn,
                "fn": c.fn,
                "invalid": c.invalid,
            }
            for c in run.counts
        ],
        "unverified": dict(sorted(run.unverified.items())),
        "metrics": {
            scope: {
                "accuracy": m.accuracy,
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
            }
            for scope, m in sorted(run.metrics.items())
        },
        "costs": [
            {
                "scope": c.scope,
                "cases": c.cases,
                "loc": c.loc,
                "wall_time_s": c.wall_time_s,
                "input_tokens": c.input_tokens,
                "output_tokens": c.output_tokens,
                "dollars": c.dollars,
            }
            for c in run.costs
        ],
        "baseline": None
        if run.baseline is None
        else {
            cid: [
                {
                    "rule_id": f.rule_id,
                    "severity": f.severity,
                    "confidence": f.confidence,
                    "line": f.line,
                }
                for f in findings
            ]
            for cid, findings in sorted(run.baseline.items())
        },
        "labels": [
            {
                "case_id": l.case_id,
                "actually_vulnerable": l.actually_vulnerable,
                "source": l.source,
            }
            for _, l in sorted(run.labels.items())
        ],
        "comparison": None
        if run.comparison is None
        else {
            "reference": run.comparison.reference,
            "rows": [
                {
                    "model_name": r.model_name,
                    "counts": {
                        "scope": r.counts.scope,
                        "tp": r.counts.tp,
                        "fp": r.counts.fp,
                        "tn": r.counts.tn,
                        "fn": r.counts.fn,
                        "invalid": r.counts.invalid,
                    },
                    "metrics": {
                        "accuracy": r.metrics.accuracy,
                        "precision": r.metrics.precision,
                        "recall": r.metrics.recall,
                        "f1": r.metrics.f1,
                    },
                    "deltas": {
                        "accuracy": r.deltas.accuracy,
                        "precision": r.deltas.precision,
                        "recall": r.deltas.recall,
                        "f1": r.deltas.f1,
                    },
                }
                for r in run.comparison.rows
            ],
        },
    }


def render_json(run: RunResults) -> str:
    return json.dumps(run_to_dict(run), indent=2, sort_keys=True) + "\n"


def run_from_dict(doc: dict) -> RunResults:
    counts = [
        ConfusionCounts(c["scope"], c["tp"], c["fp"], c["tn"], c["fn"], c["invalid"])
        for c in doc["counts"]
    ]
    comparison = None
    if doc.get("comparison"):
        cmp_doc = doc["comparison"]
        comparison = ComparisonTable(
            reference=cmp_doc["reference"],
            rows=tuple(
                ComparisonRow(
                    model_name=r["model_name"],
                    counts=ConfusionCounts(
                        r["counts"]["scope"],
                        r["counts"]["tp"],
                        r["counts"]["fp"],
                        r["counts"]["tn"],
                        r["counts"]["fn"],
                        r["counts"]["invalid"],
                    ),
                    metrics=MetricsSummary(**r["metrics"]),
                    deltas=MetricsSummary(**r["deltas"]),
                )
                for r in cmp_doc["rows"]
            ),
        )
    return RunResults(
        project=doc["project"],
        model_name=doc["model_name"],
        manifest=FileManifest.from_json(json.dumps(doc["manifest"]))
        if doc.get("manifest")
        else None,
        candidates=CandidateSet(
            tuple(candidate_from_dict(c) for c in doc["candidates"]),
            tuple(
                SkippedFile(s["path"], s["reason"])
                for s in doc.get("extraction_skipped", [])
            ),
        ),
        blindspots=[(b["case_id"], b["reason"]) for b in doc["blindspots"]],
        verdicts={v["case_id"]: verdict_from_dict(v) for v in doc["verdicts"]},
        tests={t["case_id"]: _test_from_dict(t) for t in doc["tests"]},
        outcomes={o["case_id"]: outcome_from_dict(o) for o in doc["outcomes"]},
        classes=dict(doc["classes"]),
        counts=counts,
        unverified=dict(doc["unverified"]),
        metrics={
            scope: MetricsSummary(**m) for scope, m in doc["metrics"].items()
        },
        costs=[
            CostRecord(
                scope=c["scope"],
                cases=c["cases"],
                loc=c["loc"],
                wall_time_s=c["wall_time_s"],
                input_tokens=c.get("input_tokens"),
                output_tokens=c.get("output_tokens"),
                dollars=c.get("dollars"),
            )
            for c in doc["costs"]
        ],
        baseline=None
        if doc.get("baseline") is None
        else {
            cid: [
                BaselineFinding(cid, f["rule_id"], f["severity"], f["confidence"], f["line"])
                for f in findings
            ]
            for cid, findings in doc["baseline"].items()
        },
        labels={
            l["case_id"]: CaseLabel(l["case_id"], l["actually_vulnerable"], l["source"])
            for l in doc.get("labels", [])
        },
        comparison=comparison,
    )


def load_run(path: str | Path) -> RunResults:
    return run_from_dict(json.loads(Path(path).read_text("utf-8")))


# ---------------------------------------------------------------------------
# per-case table shared by Markdown and CSV

def _verdict_answer(run: RunResults, case_id: str) -> str:
    v = run.verdicts.get(case_id)
    if v is None:
        return "N/A"
    if isinstance(v, ParseFailure):
        return "Unparsed"
    return "Yes" if v.vulnerable else "No"


def _runnable_cells(run: RunResults, case_id: str) -> tuple[str, str, str]:
    """(directly runnable?, reason, runnable after modification?)"""
    t = run.tests.get(case_id)
    if t is None or t.directly_runnable is None:
        return "N/A", "N/A", "N/A"
    if t.directly_runnable:
        return "Yes", "N/A", "N/A"
    o = run.outcomes.get(case_id)
    if t.applied_fixes:
        reason = ", ".join(t.applied_fixes)
    elif o is not None and o.error_kind:
        reason = o.error_kind
    else:
        reason = "first run not decisive"
    fixed_ok = o is not None and o.status in ("confirmed", "refuted")
    return "No", reason, "Yes" if fixed_ok else "No"


def case_table_rows(run: RunResults) -> list[list[str]]:
    rows = []
    for idx, c in enumerate(run.candidates.candidates, start=1):
        label = run.labels.get(c.case_id)
        directly, reason, with_mod = _runnable_cells(run, c.case_id)
        rows.append(
            [
                c.project,
                f"Case {idx}",
                c.function_name,
                str(c.loc),
                ", ".join(sorted({h.sink for h in c.matched_sinks})),
                _verdict_answer(run, c.case_id),
                directly,
                reason,
                with_mod,
                "Unknown" if label is None else ("Yes" if label.actually_vulnerable else "No"),
                run.classes.get(c.case_id, "N/A"),
            ]
        )
    return rows


# ---------------------------------------------------------------------------
# Markdown

def _md_table(header: tuple[str, ...] | list[str], rows: list[list[str]]) -> str:
    out = ["| " + " | ".join(header) + " |", "| " + " | ".join("---" for _ in header) + " |"]
    for row in rows:
        out.append("| " + " | ".join(row) + " |")
    return "\n".join(out) + "\n"


def render_markdown(run: RunResults) -> str:
    parts: list[str] = [f"# Run summary: {run.project} ({run.model_name})\n"]

    if run.manifest is not None:
        parts.append(
            f"Scanned `{run.manifest.root}`: {run.manifest.total_files} files, "
            f"{run.manifest.python_files} Python files, "
            f"{run.manifest.python_loc} LOC.\n"
        )
    n_module = sum(1 for c in run.candidates.candidates if c.is_module_level)
    parts.append(
        f"Candidates: {len(run.candidates.candidates)} "
        f"(module-level: {n_module}); blindspot flags: {len(run.blindspots)}.\n"
    )

    if run.counts:
        parts.append("## Detection results\n")
        parts.append(
            _md_table(
                ("Scope", "Cases", "TP", "FP", "TN", "FN", "Invalid"),
                [
                    [
                        c.scope,
                        str(c.n_cases),
                        str(c.tp),
                        str(c.fp),
                        str(c.tn),
                        str(c.fn),
                        str(c.invalid),
                    ]
                    for c in run.counts
                ],
            )
        )
        if run.unverified:
            total_unverified = run.unverified.get("total", 0)
            parts.append(
                f"\nUnverified negatives (no ground-truth label): "
                f"{total_unverified} — excluded from the counts above.\n"
            )

    if run.metrics:
        parts.append("## Metrics\n")
        parts.append(
            _md_table(
                ("Scope", "Accuracy", "Precision", "Recall", "F1"),
                [
                    [scope, pct(m.accuracy), pct(m.precision), pct(m.recall), pct(m.f1)]
                    for scope, m in sorted(run.metrics.items())
                ],
            )
        )

    if run.costs:
        parts.append("## Cost\n")
        has_tokens = any(c.input_tokens is not None for c in run.costs)
        header = ["Analysis result", "Cases", "Line of code", "Time (s)"]
        if has_tokens:
            header += ["Input tokens", "Output tokens", "Dollars"]
        rows = []
        for c in run.costs:
            row = [c.scope, str(c.cases), str(c.loc), f"{c.wall_time_s:.2f}"]
            if has_tokens:
                row += [
                    "n/a" if c.input_tokens is None else str(c.input_tokens),
                    "n/a" if c.output_tokens is None else str(c.output_tokens),
                    "n/a" if c.dollars is None else f"${c.dollars:.2f}",
                ]
            rows.append(row)
        parts.append(_md_table(header, rows))

    if run.baseline is not None:
        flagged = sum(1 for fs in run.baseline.values() if fs)
        parts.append("## Rule-based baseline\n")
        parts.append(
            f"Flagged {flagged} of {len(run.baseline)} candidates "
            f"({sum(len(fs) for fs in run.baseline.values())} findings).\n"
        )

    if run.comparison is not None:
        parts.append("## Model comparison\n")
        parts.append(f"Reference: {run.comparison.reference}. Deltas in percentage points.\n")
        parts.append(
            _md_table(
                (
                    "Model",
                    "Accuracy",
                    "Precision",
                    "Recall",
                    "F1",
                    "ΔAccuracy",
                    "ΔPrecision",
                    "ΔRecall",
                    "ΔF1",
                ),
                [
                    [
                        r.model_name,
                        pct(r.metrics.accuracy),
                        pct(r.metrics.precision),
                        pct(r.metrics.recall),
                        pct(r.metrics.f1),
                        pp_delta(r.deltas.accuracy),
                        pp_delta(r.deltas.precision),
                        pp_delta(r.deltas.recall),
                        pp_delta(r.deltas.f1),
                    ]
                    for r in run.comparison.rows
                ],
            )
        )

    parts.append("## Per-case results\n")
    parts.append(_md_table(CASE_TABLE_COLUMNS, case_table_rows(run)))
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# CSV (RFC 4180)

def render_csv(run: RunResults) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
    writer.writerow(("Case ID",) + CASE_TABLE_COLUMNS)
    for c, row in zip(run.candidates.candidates, case_table_rows(run)):
        writer.writerow([c.case_id] + row)
    return buf.getvalue()


def write_reports(run: RunResults, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        RUN_JSON: out / RUN_JSON,
        SUMMARY_MD: out / SUMMARY_MD,
        CASES_CSV: out / CASES_CSV,
    }
    paths[RUN_JSON].write_text(render_json(run), encoding="utf-8")
    paths[SUMMARY_MD].write_text(render_markdown(run), encoding="utf-8")
    paths[CASES_CSV].write_text(render_csv(run), encoding="utf-8")
    return paths
