"""Command-injection triage pipeline.

Stages: scan a repo tree, extract functions that call dangerous sinks,
ask an LLM whether each is exploitable, generate security tests for the
"Yes" cases, execute them in an isolated workdir, and score the verdicts
against execution outcomes and ground-truth labels.
"""

from .corpus import FileManifest, SourceFileRecord, scan_repo
from .extract import (
    CandidateFunction,
    CandidateSet,
    SinkHit,
    extract_corpus,
    flag_blindspots,
    resolve_imports,
)
from .llm import (
    AnalysisVerdict,
    ParseFailure,
    PromptBundle,
    ProviderConfig,
    RawResponse,
    build_analysis_prompt,
    build_testgen_prompt,
    parse_test_code,
    parse_verdict,
    submit,
)
from .sandbox import ExecutionOutcome, ResourceLimits, execute
from .sinks import SinkCatalog, load_sink_catalog
from .testgen import SecurityTest, auto_fix, materialize
from .verdicts import (
    CaseLabel,
    ConfusionCounts,
    MetricsSummary,
    aggregate,
    aggregate_cost,
    classify_case,
    compare_models,
    compute_metrics,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisVerdict",
    "CandidateFunction",
    "CandidateSet",
    "CaseLabel",
    "ConfusionCounts",
    "ExecutionOutcome",
    "FileManifest",
    "MetricsSummary",
    "ParseFailure",
    "PromptBundle",
    "ProviderConfig",
    "RawResponse",
    "ResourceLimits",
    "SecurityTest",
    "SinkCatalog",
    "SinkHit",
    "SourceFileRecord",
    "aggregate",
    "aggregate_cost",
    "auto_fix",
    "build_analysis_prompt",
    "build_testgen_prompt",
    "classify_case",
    "compare_models",
    "compute_metrics",
    "execute",
    "extract_corpus",
    "flag_blindspots",
    "load_sink_catalog",
    "materialize",
    "parse_test_code",
    "parse_verdict",
    "resolve_imports",
    "scan_repo",
    "submit",
]
