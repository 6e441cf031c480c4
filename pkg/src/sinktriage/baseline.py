"""Rule-based comparison arm: flag candidates by syntactic sink usage.

This emulates the near-total-flagging profile of conventional Python
security linters (a candidate with any catalog sink is flagged by some
rule); it intentionally does not second-guess call-site semantics. An
adapter can ingest a real external tool's JSON report for side-by-side
comparison instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .extract import CandidateFunction, CandidateSet

SEVERITY = ("low", "medium", "high")

RULES = {
    "R1": "eval/exec call",
    "R2": "subprocess call with shell=True",
    "R3": "subprocess call without shell=True",
    "R4": "os-module command execution",
}


@dataclass(frozen=True)
class BaselineFinding:
    case_id: str
    rule_id: str
    severity: str
    confidence: str
    line: int


def run_rules(c: CandidateFunction) -> list[BaselineFinding]:
    """Deterministic per-hit rules; a candidate is flagged iff >=1 finding."""
    findings = []
    for hit in c.matched_sinks:
        if hit.sink in ("eval", "exec"):
            findings.append(BaselineFinding(c.case_id, "R1", "medium", "high", hit.line))
        elif hit.sink.startswith("subprocess."):
            if hit.shell_true:
                findings.append(BaselineFinding(c.case_id, "R2", "high", "high", hit.line))
            else:
                findings.append(BaselineFinding(c.case_id, "R3", "low", "high", hit.line))
        elif hit.sink.startswith("os."):
            findings.append(BaselineFinding(c.case_id, "R4", "high", "medium", hit.line))
    return findings


def run_baseline(cset: CandidateSet) -> dict[str, list[BaselineFinding]]:
    """Findings per case_id, including empty lists for unflagged cases."""
    return {c.case_id: run_rules(c) for c in cset.candidates}


def flagged_case_ids(findings: dict[str, list[BaselineFinding]]) -> set[str]:
    return {cid for cid, fs in findings.items() if fs}


def finding_to_dict(f: BaselineFinding) -> dict:
    return {
        "case_id": f.case_id,
        "rule_id": f.rule_id,
        "severity": f.severity,
        "confidence": f.confidence,
        "line": f.line,
    }


def write_findings_jsonl(
    findings: dict[str, list[BaselineFinding]], path: str | Path
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cid in sorted(findings):
            for f in findings[cid]:
                fh.write(json.dumps(finding_to_dict(f), sort_keys=True) + "\n")


def ingest_external_report(
    path: str | Path, candidates: Iterable[CandidateFunction]
) -> dict[str, list[BaselineFinding]]:
    """Adapter for an external tool's JSON report.

    Expects {"results": [{"filename", "line_number", "test_id",
    "issue_severity", "issue_confidence"}, ...]} and attributes each
    result to the candidate whose file and span contain it.
    """
    doc = json.loads(Path(path).read_text("utf-8"))
    results = doc.get("results", doc if isinstance(doc, list) else [])
    by_case: dict[str, list[BaselineFinding]] = {c.case_id: [] for c in candidates}
    spans = [
        (c.file, c.line_span, c.case_id)
        for c in candidates
    ]
    for item in results:
        fname = item.get("filename", "")
        line = int(item.get("line_number", item.get("line", 0)))
        for file, (start, end), cid in spans:
            if fname.endswith(file) and start <= line <= end:
                by_case[cid].append(
                    BaselineFinding(
                        case_id=cid,
                        rule_id=str(item.get("test_id", "external")),
                        severity=str(item.get("issue_severity", "medium")).lower(),
                        confidence=str(item.get("issue_confidence", "medium")).lower(),
                        line=line,
                    )
                )
    return by_case
