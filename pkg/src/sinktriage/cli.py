"""Operator entry point: each pipeline step is addressable, plus a
`pipeline` command that chains them.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Secrets come
from environment variables only (<PROVIDER_ID>_API_KEY); everything else
is flags plus an optional JSON config file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from .corpus import FileManifest, scan_repo
from .errors import SinktriageError
from .extract import (
    extract_corpus,
    flag_blindspots,
    read_candidates_jsonl,
    write_candidate_files,
    write_candidates_jsonl,
)
from .llm import (
    HttpProvider,
    MockProvider,
    ProviderConfig,
    ReplayProvider,
)
from .report import RunResults, load_run, render_json, write_reports
from .sandbox import ResourceLimits
from .sinks import load_sink_catalog
from .verdicts import compare_models, read_labels_jsonl

logger = logging.getLogger(__name__)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text("utf-8"))


def _provider_config(args, config: dict) -> ProviderConfig:
    section = config.get("provider", {})
    return ProviderConfig(
        provider_id=args.provider or section.get("provider_id", "mock"),
        model_name=args.model or section.get("model_name", "mock-model"),
        temperature=args.temperature
        if args.temperature is not None
        else section.get("temperature", 0.0),
        max_output_tokens=section.get("max_output_tokens", 2048),
        price_per_input_token=section.get("price_per_input_token", 0.0),
        price_per_output_token=section.get("price_per_output_token", 0.0),
        request_timeout_s=section.get("request_timeout_s", 60.0),
        max_retries=section.get("max_retries", 2),
        rate_limit_per_minute=section.get("rate_limit_per_minute"),
        endpoint_url=getattr(args, "endpoint", None) or section.get("endpoint_url"),
    )


def _make_provider(args, cfg: ProviderConfig, parser: argparse.ArgumentParser):
    if getattr(args, "cassette", None):
        return ReplayProvider(args.cassette)
    if args.provider == "mock":
        return MockProvider()
    if args.provider:
        return HttpProvider(cfg)
    parser.error("either --cassette or --provider is required")


def _prices(cfg: ProviderConfig) -> tuple[float, float] | None:
    if cfg.price_per_input_token or cfg.price_per_output_token:
        return (cfg.price_per_input_token, cfg.price_per_output_token)
    return None


def _add_llm_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--provider", help="provider id (mock for the built-in echo provider)")
    p.add_argument("--model", help="model name sent to the provider")
    p.add_argument("--endpoint", help="chat-completions endpoint URL for live providers")
    p.add_argument("--cassette", help="replay cassette path (offline mode)")
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--parallelism", type=int, default=1)


def _add_exec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--exec-timeout-s", type=float, default=None)
    p.add_argument("--exec-parallelism", type=int, default=None)
    p.add_argument("--runner-shim", help="runner shim: script path or module name")


def _exec_settings(args, config: dict) -> tuple[ResourceLimits, int, str | None]:
    """(limits, parallelism, runner) from flags, falling back to the
    config file's `exec` section, then defaults."""
    section = config.get("exec", {})
    timeout = (
        args.exec_timeout_s
        if args.exec_timeout_s is not None
        else section.get("timeout_s", 30.0)
    )
    parallelism = (
        args.exec_parallelism
        if args.exec_parallelism is not None
        else section.get("parallelism", 1)
    )
    runner = args.runner_shim or section.get("runner_shim")
    return ResourceLimits(timeout_s=timeout), parallelism, runner


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sinktriage",
        description="Command-injection triage: extract, analyze, test, validate, score.",
    )
    parser.add_argument("--config", help="optional JSON config file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="step 1: build a file manifest for a repo tree")
    p.add_argument("root")
    p.add_argument("--ignore", action="append", default=[], help="glob to exclude")
    p.add_argument("-o", "--output", default="manifest.json")

    p = sub.add_parser("extract", help="step 2: extract candidate functions")
    p.add_argument("manifest")
    p.add_argument("--project", default="project")
    p.add_argument("--catalog", help="custom sink catalog (JSON)")
    p.add_argument("-o", "--output", default="candidates.jsonl")
    p.add_argument("--files-dir", help="also write one source file per candidate")
    p.add_argument("--blindspots", help="write blindspot advisor flags here")

    p = sub.add_parser("analyze", help="step 3: LLM vulnerability verdicts")
    p.add_argument("candidates")
    _add_llm_flags(p)
    p.add_argument("-o", "--output", default="verdicts.jsonl")

    p = sub.add_parser("gen-tests", help="step 4: generate security tests for Yes verdicts")
    p.add_argument("verdicts")
    p.add_argument("--candidates", required=True)
    _add_llm_flags(p)
    p.add_argument("-o", "--output", default="tests.jsonl")

    p = sub.add_parser("run-tests", help="step 5: execute tests in isolated workdirs")
    p.add_argument("tests")
    p.add_argument("--candidates", required=True)
    p.add_argument("--tests-dir", default="tests-work")
    _add_exec_flags(p)
    p.add_argument("-o", "--output", default="outcomes.jsonl")

    p = sub.add_parser("evaluate", help="classify cases, count, compute metrics and costs")
    p.add_argument("verdicts")
    p.add_argument("outcomes")
    p.add_argument("--candidates", required=True)
    p.add_argument("--tests", help="tests.jsonl (for fixes and cost accounting)")
    p.add_argument("--labels", help="ground-truth labels JSONL")
    p.add_argument("--project", default="project")
    p.add_argument("--model", default="unknown-model")
    p.add_argument("-o", "--output", default="run.json")

    p = sub.add_parser("baseline", help="rule-based comparison arm over candidates")
    p.add_argument("candidates")
    p.add_argument("-o", "--output", default="baseline.jsonl")

    p = sub.add_parser("compare", help="compare >=2 evaluated runs")
    p.add_argument("runs", nargs="+")
    p.add_argument("--reference", help="reference model name (default: first run)")
    p.add_argument("-o", "--output", default="comparison.json")

    p = sub.add_parser("report", help="render JSON/Markdown/CSV for an evaluated run")
    p.add_argument("run")
    p.add_argument("-o", "--out-dir", default="out")

    p = sub.add_parser("pipeline", help="all steps chained")
    p.add_argument("root")
    p.add_argument("--project", default="project")
    p.add_argument("--ignore", action="append", default=[])
    p.add_argument("--catalog")
    p.add_argument("--labels")
    _add_llm_flags(p)
    _add_exec_flags(p)
    p.add_argument("-o", "--out-dir", default="out")

    return parser


def _cmd_scan(args) -> int:
    manifest = scan_repo(args.root, args.ignore)
    Path(args.output).write_text(manifest.to_json() + "\n", "utf-8")
    print(
        f"scanned {manifest.total_files} files "
        f"({manifest.python_files} Python, {manifest.python_loc} LOC) -> {args.output}"
    )
    return 0


def _cmd_extract(args) -> int:
    manifest = FileManifest.from_json(Path(args.manifest).read_text("utf-8"))
    catalog = load_sink_catalog(args.catalog)
    cset = extract_corpus(manifest, catalog, project=args.project)
    write_candidates_jsonl(cset, args.output)
    if args.files_dir:
        write_candidate_files(cset, args.files_dir)
    if args.blindspots:
        pl.write_blindspots_jsonl(flag_blindspots(cset), args.blindspots)
    n_module = sum(1 for c in cset.candidates if c.is_module_level)
    print(
        f"extracted {len(cset.candidates)} candidates "
        f"({n_module} module-level, {len(cset.skipped)} files skipped) -> {args.output}"
    )
    return 0


def _cmd_analyze(args, parser, config) -> int:
    cset = read_candidates_jsonl(args.candidates)
    cfg = _provider_config(args, config)
    provider = _make_provider(args, cfg, parser)
    verdicts = pl.analyze_candidates(cset, cfg, provider, args.parallelism)
    pl.write_verdicts_jsonl(verdicts, args.output)
    n_yes = sum(1 for v in verdicts.values() if getattr(v, "vulnerable", False))
    print(f"analyzed {len(verdicts)} candidates ({n_yes} Yes) -> {args.output}")
    return 0


def _cmd_gen_tests(args, parser, config) -> int:
    cset = read_candidates_jsonl(args.candidates)
    verdicts = pl.read_verdicts_jsonl(args.verdicts)
    cfg = _provider_config(args, config)
    provider = _make_provider(args, cfg, parser)
    tests, raws, failures = pl.generate_tests(verdicts, cset, cfg, provider)
    pl.write_tests_jsonl(tests, raws, args.output)
    print(
        f"generated {len(tests)} tests ({len(failures)} generation failures) -> {args.output}"
    )
    return 0


def _cmd_run_tests(args, config) -> int:
    cset = read_candidates_jsonl(args.candidates)
    tests, raws = pl.read_tests_jsonl(args.tests)
    limits, parallelism, runner = _exec_settings(args, config)
    tests, outcomes = pl.run_tests(
        tests,
        cset,
        args.tests_dir,
        limits,
        runner=runner,
        parallelism=parallelism,
    )
    pl.write_outcomes_jsonl(outcomes, args.output)
    pl.write_tests_jsonl(tests, raws, args.tests)  # update runnable flags / fixes
    print(f"executed {len(outcomes)} tests -> {args.output}")
    return 0


def _cmd_evaluate(args, config) -> int:
    cset = read_candidates_jsonl(args.candidates)
    run = RunResults(project=args.project, model_name=args.model, candidates=cset)
    run.verdicts = pl.read_verdicts_jsonl(args.verdicts)
    run.outcomes = pl.read_outcomes_jsonl(args.outcomes)
    raws = {}
    if args.tests:
        run.tests, raws = pl.read_tests_jsonl(args.tests)
    if args.labels:
        run.labels = read_labels_jsonl(args.labels)
    pl.evaluate(run, raws)
    Path(args.output).write_text(render_json(run), "utf-8")
    total = next((c for c in run.counts if c.scope == "total"), None)
    if total:
        print(
            f"classified {total.n_cases} cases: "
            f"TP={total.tp} FP={total.fp} TN={total.tn} FN={total.fn} "
            f"Invalid={total.invalid} Unverified={run.unverified.get('total', 0)}"
        )
    print(f"evaluation -> {args.output}")
    return 0


def _cmd_baseline(args) -> int:
    from .baseline import flagged_case_ids, run_baseline, write_findings_jsonl

    cset = read_candidates_jsonl(args.candidates)
    findings = run_baseline(cset)
    write_findings_jsonl(findings, args.output)
    print(
        f"baseline flagged {len(flagged_case_ids(findings))}/{len(findings)} "
        f"candidates -> {args.output}"
    )
    return 0


def _cmd_compare(args) -> int:
    runs = []
    for path in args.runs:
        run = load_run(path)
        total = next((c for c in run.counts if c.scope == "total"), None)
        if total is None:
            raise SinktriageError(f"{path} has no total confusion counts")
        runs.append((run.model_name, total))
    table = compare_models(runs, reference=args.reference)
    doc = {
        "reference": table.reference,
        "rows": [
            {
                "model_name": r.model_name,
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
            for r in table.rows
        ],
    }
    Path(args.output).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", "utf-8")
    print(f"compared {len(runs)} runs (reference {table.reference}) -> {args.output}")
    return 0


def _cmd_report(args) -> int:
    run = load_run(args.run)
    paths = write_reports(run, args.out_dir)
    for name, path in paths.items():
        print(f"{name} -> {path}")
    return 0


def _cmd_pipeline(args, parser, config) -> int:
    from .baseline import run_baseline
    from .report import render_json

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    manifest = scan_repo(args.root, args.ignore)
    (out / "manifest.json").write_text(manifest.to_json() + "\n", "utf-8")

    catalog = load_sink_catalog(args.catalog)
    cset = extract_corpus(manifest, catalog, project=args.project)
    write_candidates_jsonl(cset, out / "candidates.jsonl")
    write_candidate_files(cset, out / "candidates")
    blindspots = flag_blindspots(cset)
    pl.write_blindspots_jsonl(blindspots, out / "blindspots.jsonl")

    cfg = _provider_config(args, config)
    provider = _make_provider(args, cfg, parser)
    verdicts = pl.analyze_candidates(cset, cfg, provider, args.parallelism)
    pl.write_verdicts_jsonl(verdicts, out / "verdicts.jsonl")

    tests, raws, _failures = pl.generate_tests(verdicts, cset, cfg, provider)
    limits, parallelism, runner = _exec_settings(args, config)
    tests, outcomes = pl.run_tests(
        tests,
        cset,
        out / "tests",
        limits,
        runner=runner,
        parallelism=parallelism,
    )
    pl.write_tests_jsonl(tests, raws, out / "tests.jsonl")
    pl.write_outcomes_jsonl(outcomes, out / "outcomes.jsonl")

    run = RunResults(
        project=args.project,
        model_name=cfg.model_name,
        candidates=cset,
        manifest=manifest,
        blindspots=blindspots,
        verdicts=verdicts,
        tests=tests,
        outcomes=outcomes,
        baseline=run_baseline(cset),
    )
    if args.labels:
        run.labels = read_labels_jsonl(args.labels)
    pl.evaluate(run, raws, _prices(cfg))
    write_reports(run, out)
    total = next((c for c in run.counts if c.scope == "total"), None)
    if total:
        print(
            f"pipeline done: TP={total.tp} FP={total.fp} TN={total.tn} "
            f"FN={total.fn} Invalid={total.invalid} "
            f"Unverified={run.unverified.get('total', 0)} -> {out}"
        )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _load_config(args.config)
        if args.command == "scan":
            return _cmd_scan(args)
        if args.command == "extract":
            return _cmd_extract(args)
        if args.command == "analyze":
            return _cmd_analyze(args, parser, config)
        if args.command == "gen-tests":
            return _cmd_gen_tests(args, parser, config)
        if args.command == "run-tests":
            return _cmd_run_tests(args, config)
        if args.command == "evaluate":
            return _cmd_evaluate(args, config)
        if args.command == "baseline":
            return _cmd_baseline(args)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "pipeline":
            return _cmd_pipeline(args, parser, config)
        parser.error(f"unknown command {args.command!r}")
    except (SinktriageError, OSError, ValueError, KeyError) as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
