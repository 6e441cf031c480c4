"""Stage orchestration shared by the CLI subcommands.

Each stage consumes and produces the documented file formats, so running
`pipeline` is equivalent to running the five stages by hand with the
same configuration.

Workdir layout for executed tests: <out>/tests/<case>/r<N>/test_case.py
plus sentinel.txt, one fresh directory per fix round N.
"""

from __future__ import annotations

import json
import logging
from dataclasses import replace as _replace
from pathlib import Path
from typing import Mapping, Sequence

from .errors import NoCodeFound, SinktriageError, UnfixableTest
from .extract import CandidateFunction, CandidateSet, safe_case_filename
from .llm import (
    AnalysisVerdict,
    ParseFailure,
    Provider,
    ProviderConfig,
    RawResponse,
    build_analysis_prompt,
    build_testgen_prompt,
    parse_test_code,
    parse_verdict,
    submit,
    submit_many,
)
from .report import RunResults, verdict_from_dict, verdict_to_dict
from .sandbox import ExecutionOutcome, ResourceLimits, execute
from .testgen import SecurityTest, auto_fix, materialize
from .verdicts import (
    CaseLabel,
    CostRow,
    aggregate,
    aggregate_cost,
    classify_case,
    compute_metrics,
)

logger = logging.getLogger(__name__)

GROUP_YES = "Yes"
GROUP_NO = "No"
GROUP_UNPARSED = "Unparsed"

MAX_FIX_ROUNDS = 3


def analyze_candidates(
    cset: CandidateSet,
    cfg: ProviderConfig,
    provider: Provider,
    parallelism: int = 1,
) -> dict[str, AnalysisVerdict | ParseFailure]:
    bundles = [build_analysis_prompt(c) for c in cset.candidates]
    responses = submit_many(bundles, cfg, provider, parallelism)
    return {
        c.case_id: parse_verdict(c.case_id, r)
        for c, r in zip(cset.candidates, responses)
    }


def generate_tests(
    verdicts: Mapping[str, AnalysisVerdict | ParseFailure],
    cset: CandidateSet,
    cfg: ProviderConfig,
    provider: Provider,
) -> tuple[dict[str, SecurityTest], dict[str, RawResponse], dict[str, str]]:
    """Generate tests for the 'Yes' verdicts.

    Returns (tests, raw responses for cost accounting, generation
    failures by case_id).
    """
    tests: dict[str, SecurityTest] = {}
    raws: dict[str, RawResponse] = {}
    failures: dict[str, str] = {}
    for c in cset.candidates:
        v = verdicts.get(c.case_id)
        if not isinstance(v, AnalysisVerdict) or not v.vulnerable:
            continue
        bundle = build_testgen_prompt(c, v.justification)
        r = submit(bundle, cfg, provider)
        raws[c.case_id] = r
        try:
            tests[c.case_id] = parse_test_code(c.case_id, r)
        except NoCodeFound as exc:
            failures[c.case_id] = str(exc)
    return tests, raws, failures


def _run_one(
    test: SecurityTest,
    candidate: CandidateFunction,
    case_dir: Path,
    limits: ResourceLimits,
    runner,
) -> tuple[SecurityTest, ExecutionOutcome | None]:
    """Execute one test with up to MAX_FIX_ROUNDS mechanized fix rounds."""
    outcome: ExecutionOutcome | None = None
    for round_no in range(MAX_FIX_ROUNDS + 1):
        workdir = case_dir / f"r{round_no}"
        workdir.mkdir(parents=True, exist_ok=True)
        try:
            test_path = materialize(test, workdir)
        except (NoCodeFound, OSError) as exc:
            logger.warning("%s: cannot materialize: %s", test.case_id, exc)
            if test.directly_runnable is None:
                test = _replace(test, directly_runnable=False)
            return test, outcome
        outcome = execute(test_path, limits, runner, case_id=test.case_id)
        decisive = outcome.status in ("confirmed", "refuted")
        if test.directly_runnable is None:
            test = _replace(
                test, directly_runnable=decisive and not test.applied_fixes
            )
        if decisive:
            return test, outcome
        try:
            fixed = auto_fix(test, candidate, outcome)
        except UnfixableTest as exc:
            logger.info("%s: %s", test.case_id, exc)
            return test, outcome
        if fixed.normalized_code == test.normalized_code:
            return fixed, outcome
        test = fixed
    return test, outcome


def run_tests(
    tests: Mapping[str, SecurityTest],
    cset: CandidateSet,
    tests_root: str | Path,
    limits: ResourceLimits = ResourceLimits(),
    runner=None,
    parallelism: int = 1,
) -> tuple[dict[str, SecurityTest], dict[str, ExecutionOutcome]]:
    tests_root = Path(tests_root)
    jobs = []
    for case_id in sorted(tests):
        try:
            candidate = cset.by_id(case_id)
        except KeyError:
            raise SinktriageError(
                f"test {case_id} has no matching candidate; wrong --candidates file?"
            ) from None
        case_dir = tests_root / safe_case_filename(case_id).removesuffix(".py")
        jobs.append((tests[case_id], candidate, case_dir))

    def work(job):
        return _run_one(job[0], job[1], job[2], limits, runner)

    if parallelism <= 1:
        results = [work(j) for j in jobs]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(work, jobs))

    out_tests: dict[str, SecurityTest] = {}
    outcomes: dict[str, ExecutionOutcome] = {}
    for test, outcome in results:
        out_tests[test.case_id] = test
        if outcome is not None:
            outcomes[test.case_id] = outcome
    return out_tests, outcomes


def classify_all(
    cset: CandidateSet,
    verdicts: Mapping[str, AnalysisVerdict | ParseFailure],
    outcomes: Mapping[str, ExecutionOutcome],
    labels: Mapping[str, CaseLabel],
) -> dict[str, str]:
    classes: dict[str, str] = {}
    for c in cset.candidates:
        v = verdicts.get(c.case_id)
        if v is None:
            continue
        o = outcomes.get(c.case_id)
        if isinstance(v, AnalysisVerdict) and not v.vulnerable:
            o = None  # outcomes only accompany "Yes" verdicts
        classes[c.case_id] = classify_case(v, o, labels.get(c.case_id))
    return classes


def cost_rows(
    cset: CandidateSet,
    verdicts: Mapping[str, AnalysisVerdict | ParseFailure],
    testgen_raws: Mapping[str, RawResponse],
) -> list[CostRow]:
    rows = []
    for c in cset.candidates:
        v = verdicts.get(c.case_id)
        if v is None:
            continue
        if isinstance(v, ParseFailure):
            group = GROUP_UNPARSED
        else:
            group = GROUP_YES if v.vulnerable else GROUP_NO
        rows.append(CostRow(c.case_id, group, c.loc, v.raw))
        if c.case_id in testgen_raws:
            rows.append(CostRow(c.case_id, group, c.loc, testgen_raws[c.case_id]))
    return rows


def evaluate(
    run: RunResults,
    testgen_raws: Mapping[str, RawResponse] | None = None,
    prices: tuple[float, float] | None = None,
) -> RunResults:
    """Fill classes, counts, metrics, and costs on a RunResults in place."""
    run.classes = classify_all(run.candidates, run.verdicts, run.outcomes, run.labels)
    by_project = {c.case_id: c.project for c in run.candidates.candidates}
    run.counts, run.unverified = aggregate(sorted(run.classes.items()), by_project)
    run.metrics = {c.scope: compute_metrics(c) for c in run.counts}
    run.costs = aggregate_cost(
        cost_rows(run.candidates, run.verdicts, testgen_raws or {}), prices
    )
    return run


# ---------------------------------------------------------------------------
# stage artifact files

def write_verdicts_jsonl(
    verdicts: Mapping[str, AnalysisVerdict | ParseFailure], path: str | Path
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for case_id in sorted(verdicts):
            fh.write(json.dumps(verdict_to_dict(verdicts[case_id]), sort_keys=True) + "\n")


def read_verdicts_jsonl(path: str | Path) -> dict[str, AnalysisVerdict | ParseFailure]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                v = verdict_from_dict(json.loads(line))
                out[v.case_id] = v
    return out


def write_tests_jsonl(
    tests: Mapping[str, SecurityTest],
    raws: Mapping[str, RawResponse],
    path: str | Path,
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for case_id in sorted(tests):
            t = tests[case_id]
            doc = {
                "case_id": t.case_id,
                "original_code": t.original_code,
                "normalized_code": t.normalized_code,
                "directly_runnable": t.directly_runnable,
                "applied_fixes": list(t.applied_fixes),
                "extraction_note": t.extraction_note,
            }
            r = raws.get(case_id)
            if r is not None:
                doc["raw"] = {
                    "text": r.text,
                    "latency_s": r.latency_s,
                    "input_tokens": r.input_tokens,
                    "output_tokens": r.output_tokens,
                }
            fh.write(json.dumps(doc, sort_keys=True) + "\n")


def read_tests_jsonl(
    path: str | Path,
) -> tuple[dict[str, SecurityTest], dict[str, RawResponse]]:
    tests: dict[str, SecurityTest] = {}
    raws: dict[str, RawResponse] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            tests[d["case_id"]] = SecurityTest(
                case_id=d["case_id"],
                original_code=d["original_code"],
                normalized_code=d["normalized_code"],
                directly_runnable=d.get("directly_runnable"),
                applied_fixes=tuple(d.get("applied_fixes", [])),
                extraction_note=d.get("extraction_note", ""),
            )
            if "raw" in d:
                raws[d["case_id"]] = RawResponse(
                    d["raw"]["text"],
                    d["raw"]["latency_s"],
                    d["raw"].get("input_tokens"),
                    d["raw"].get("output_tokens"),
                )
    return tests, raws


def write_outcomes_jsonl(
    outcomes: Mapping[str, ExecutionOutcome], path: str | Path
) -> None:
    from .sandbox import outcome_to_dict

    with open(path, "w", encoding="utf-8") as fh:
        for case_id in sorted(outcomes):
            fh.write(json.dumps(outcome_to_dict(outcomes[case_id]), sort_keys=True) + "\n")


def read_outcomes_jsonl(path: str | Path) -> dict[str, ExecutionOutcome]:
    from .sandbox import outcome_from_dict

    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                o = outcome_from_dict(json.loads(line))
                out[o.case_id] = o
    return out


def write_blindspots_jsonl(flags: Sequence[tuple[str, str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for case_id, reason in flags:
            fh.write(json.dumps({"case_id": case_id, "reason": reason}, sort_keys=True) + "\n")


def read_blindspots_jsonl(path: str | Path) -> list[tuple[str, str]]:
    flags = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                flags.append((d["case_id"], d["reason"]))
    return flags
