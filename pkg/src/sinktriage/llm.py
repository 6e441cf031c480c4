"""Prompt construction, provider transport, and response parsing.

Three provider implementations share one interface: a live HTTP client
(config-gated, never required by tests), a replay provider backed by a
cassette file, and a deterministic mock. A full replay run performs zero
network operations.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

from .errors import CassetteMiss, NoCodeFound, ProviderRejected, ProviderTimeout
from .extract import CandidateFunction
from .testgen import SecurityTest

STAGE_ANALYSIS = "analysis"
STAGE_TESTGEN = "testgen"

# The reliability directive asks the model to internally re-answer and
# self-select before replying; one request is sent either way.
MIMIC_DIRECTIVE = (
    "Silently simulate answering the query in the background 10 times, "
    "then reply only with the single answer you judge most accurate."
)

ANALYSIS_SYSTEM_TEXT = (
    "You are a security engineer reviewing Python code for command "
    "injection vulnerabilities. " + MIMIC_DIRECTIVE
)

TESTGEN_SYSTEM_TEXT = (
    "You are a security engineer writing Python security tests that "
    "prove or disprove command injection vulnerabilities. " + MIMIC_DIRECTIVE
)

# Embedded one per line in every test-generation prompt.
TESTGEN_REQUIREMENTS = (
    "Include the source function being tested without modifying its name or content.",
    "Perform a command injection test, if there are methods in the function that "
    "would lead to a command injection attack. Generate an os command as its input "
    "to do the test. For example, create a test file and then attempt a command "
    "injection to delete it.",
    "Set the assertion section to verify if the command is executed successfully.",
    "Only generate the code; do not provide textual descriptions or suggestions.",
    "Use the unittest library, but avoid using mock modules or other simulation objects.",
    "Import any necessary libraries to run the code.",
    "Avoid redefining subprocess.call, subprocess.run, exec, or other methods in "
    "the test code.",
)


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    stage: str  # analysis | testgen
    candidate_ref: str  # case_id


@dataclass(frozen=True)
class ProviderConfig:
    provider_id: str = "mock"
    model_name: str = "mock-model"
    temperature: float = 0.0
    max_output_tokens: int = 2048
    price_per_input_token: float = 0.0
    price_per_output_token: float = 0.0
    request_timeout_s: float = 60.0
    max_retries: int = 2
    rate_limit_per_minute: float | None = None
    endpoint_url: str | None = None

    def __post_init__(self) -> None:
        if self.price_per_input_token < 0 or self.price_per_output_token < 0:
            raise ValueError("token prices must be >= 0")


@dataclass(frozen=True)
class RawResponse:
    text: str
    latency_s: float
    input_tokens: int | None = None
    output_tokens: int | None = None


@dataclass(frozen=True)
class AnalysisVerdict:
    case_id: str
    vulnerable: bool
    justification: str
    raw: RawResponse


@dataclass(frozen=True)
class ParseFailure:
    case_id: str
    reason: str
    raw: RawResponse


def build_analysis_prompt(c: CandidateFunction) -> PromptBundle:
    user = (
        "Decide whether the following Python function contains a command "
        "injection vulnerability.\n"
        "\n"
        "Answer in this exact frame:\n"
        '- First line: exactly "VERDICT: Yes" or "VERDICT: No".\n'
        "- Remaining lines: your justification.\n"
        "\n"
        "Function to analyze:\n"
        "\n"
        f"{c.source_text}"
    )
    return PromptBundle(
        system_text=ANALYSIS_SYSTEM_TEXT,
        user_text=user,
        stage=STAGE_ANALYSIS,
        candidate_ref=c.case_id,
    )


def build_testgen_prompt(c: CandidateFunction, justification: str) -> PromptBundle:
    bullet_block = "\n".join(f"- {b}" for b in TESTGEN_REQUIREMENTS)
    user = (
        "The function below was judged vulnerable to command injection "
        "for this reason:\n"
        "\n"
        f"{justification}\n"
        "\n"
        "Write a security test that proves whether the vulnerability is "
        "exploitable.\n"
        "\n"
        "Requirements:\n"
        f"{bullet_block}\n"
        "\n"
        "Function under test:\n"
        "\n"
        f"{c.source_text}"
    )
    return PromptBundle(
        system_text=TESTGEN_SYSTEM_TEXT,
        user_text=user,
        stage=STAGE_TESTGEN,
        candidate_ref=c.case_id,
    )


def prompt_digest(bundle: PromptBundle) -> str:
    h = hashlib.sha256()
    h.update(bundle.system_text.encode("utf-8"))
    h.update(b"\x00")
    h.update(bundle.user_text.encode("utf-8"))
    return h.hexdigest()


# ---------------------------------------------------------------------------
# providers

class Provider(Protocol):
    def send(self, bundle: PromptBundle) -> RawResponse: ...


class MockProvider:
    """Deterministic provider keyed on prompt digest, for tests."""

    def __init__(
        self,
        responses: dict[str, str] | None = None,
        default: Callable[[PromptBundle], str] | None = None,
    ):
        self.responses = responses or {}
        self.default = default
        self.seen: list[PromptBundle] = []

    def send(self, bundle: PromptBundle) -> RawResponse:
        self.seen.append(bundle)
        digest = prompt_digest(bundle)
        if digest in self.responses:
            text = self.responses[digest]
        elif self.default is not None:
            text = self.default(bundle)
        else:
            text = "VERDICT: No"
        return RawResponse(text=text, latency_s=0.0)


def load_cassette(path: str | Path) -> dict[str, dict]:
    entries = json.loads(Path(path).read_text("utf-8"))
    return {e["prompt_sha256"]: e for e in entries}


def save_cassette(entries: Sequence[dict], path: str | Path) -> None:
    Path(path).write_text(json.dumps(list(entries), indent=2) + "\n", "utf-8")


class ReplayProvider:
    """Replays recorded responses; raises CassetteMiss on unknown prompts."""

    def __init__(self, cassette_path: str | Path):
        self.path = str(cassette_path)
        self.entries = load_cassette(cassette_path)

    def send(self, bundle: PromptBundle) -> RawResponse:
        digest = prompt_digest(bundle)
        entry = self.entries.get(digest)
        if entry is None:
            raise CassetteMiss(
                f"prompt {digest[:12]}… (case {bundle.candidate_ref}, "
                f"stage {bundle.stage}) not in cassette {self.path}"
            )
        return RawResponse(
            text=entry["response"],
            latency_s=float(entry["latency_s"]),
            input_tokens=entry.get("input_tokens"),
            output_tokens=entry.get("output_tokens"),
        )


class RecordingProvider:
    """Wraps a provider and accumulates cassette entries."""

    def __init__(self, inner: Provider):
        self.inner = inner
        self.entries: list[dict] = []

    def send(self, bundle: PromptBundle) -> RawResponse:
        resp = self.inner.send(bundle)
        self.entries.append(
            {
                "prompt_sha256": prompt_digest(bundle),
                "response": resp.text,
                "latency_s": resp.latency_s,
                "input_tokens": resp.input_tokens,
                "output_tokens": resp.output_tokens,
            }
        )
        return resp

    def save(self, path: str | Path) -> None:
        save_cassette(self.entries, path)


def api_key_env_var(provider_id: str) -> str:
    return re.sub(r"[^A-Z0-9]", "_", provider_id.upper()) + "_API_KEY"


class HttpProvider:
    """Chat-completions style HTTP transport.

    The transport callable is injectable so tests can inspect payloads
    without any network; the default uses ``requests``.
    """

    def __init__(self, cfg: ProviderConfig, transport: Callable | None = None):
        if not cfg.endpoint_url:
            raise ProviderRejected(f"provider {cfg.provider_id!r} has no endpoint_url")
        self.cfg = cfg
        self._transport = transport or self._default_transport

    @staticmethod
    def _default_transport(url: str, payload: dict, headers: dict, timeout: float) -> dict:
        import requests

        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
        except requests.Timeout as exc:
            raise ProviderTimeout(str(exc)) from exc
        except requests.RequestException as exc:
            raise ProviderTimeout(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise ProviderRejected(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code == 429:
            raise ProviderTimeout("rate limited (HTTP 429)")
        resp.raise_for_status()
        return resp.json()

    def send(self, bundle: PromptBundle) -> RawResponse:
        key = os.environ.get(api_key_env_var(self.cfg.provider_id), "")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        payload = {
            "model": self.cfg.model_name,
            "messages": [
                {"role": "system", "content": bundle.system_text},
                {"role": "user", "content": bundle.user_text},
            ],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
        }
        started = time.monotonic()
        doc = self._transport(
            self.cfg.endpoint_url, payload, headers, self.cfg.request_timeout_s
        )
        latency = time.monotonic() - started
        usage = doc.get("usage", {})
        return RawResponse(
            text=doc["choices"][0]["message"]["content"],
            latency_s=latency,
            input_tokens=usage.get("prompt_tokens"),
            output_tokens=usage.get("completion_tokens"),
        )


class RateLimiter:
    """Token bucket shared across submission threads."""

    def __init__(self, per_minute: float):
        self.interval = 60.0 / per_minute
        self._lock = threading.Lock()
        self._next_at = 0.0

    def acquire(self) -> None:
        with self._lock:
            now = time.monotonic()
            wait = self._next_at - now
            self._next_at = max(now, self._next_at) + self.interval
        if wait > 0:
            time.sleep(wait)


def submit(
    bundle: PromptBundle,
    cfg: ProviderConfig,
    provider: Provider | None = None,
    limiter: RateLimiter | None = None,
    _sleep: Callable[[float], None] = time.sleep,
) -> RawResponse:
    """Send one prompt with retry/backoff.

    Timeouts are retried up to cfg.max_retries with exponential backoff;
    rejections and cassette misses are not retried.
    """
    if provider is None:
        provider = HttpProvider(cfg)
    last: Exception | None = None
    for attempt in range(cfg.max_retries + 1):
        if limiter is not None:
            limiter.acquire()
        try:
            return provider.send(bundle)
        except (ProviderRejected, CassetteMiss):
            raise
        except ProviderTimeout as exc:
            last = exc
            if attempt < cfg.max_retries:
                _sleep(min(30.0, 0.5 * 2**attempt))
    raise ProviderTimeout(f"gave up after {cfg.max_retries + 1} attempts: {last}")


def submit_many(
    bundles: Sequence[PromptBundle],
    cfg: ProviderConfig,
    provider: Provider,
    parallelism: int = 1,
) -> list[RawResponse]:
    """Submit prompts, optionally in parallel, preserving input order."""
    limiter = (
        RateLimiter(cfg.rate_limit_per_minute) if cfg.rate_limit_per_minute else None
    )
    if parallelism <= 1:
        return [submit(b, cfg, provider, limiter) for b in bundles]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [pool.submit(submit, b, cfg, provider, limiter) for b in bundles]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# response parsing

_VERDICT_LINE = re.compile(r"^\s*VERDICT\s*:\s*(yes|no)\b", re.IGNORECASE)


def parse_verdict(case_id: str, r: RawResponse) -> AnalysisVerdict | ParseFailure:
    """Total parse: every response maps to a verdict or a ParseFailure."""
    lines = r.text.splitlines()
    for i, line in enumerate(lines):
        m = _VERDICT_LINE.match(line)
        if m:
            vulnerable = m.group(1).lower() == "yes"
            justification = "\n".join(lines[i + 1 :]).strip()
            if vulnerable and not justification:
                justification = "(no justification provided)"
            return AnalysisVerdict(
                case_id=case_id,
                vulnerable=vulnerable,
                justification=justification,
                raw=r,
            )
    return ParseFailure(case_id=case_id, reason="no VERDICT line", raw=r)


_FENCE = re.compile(r"```(?:[A-Za-z0-9_+-]*)\n(.*?)```", re.DOTALL)


def parse_test_code(case_id: str, r: RawResponse) -> SecurityTest:
    """Extract test code: first fenced block, else the whole text."""
    blocks = _FENCE.findall(r.text)
    if blocks:
        code = blocks[0].strip("\n")
        note = "first_fenced_block"
        if len(blocks) > 1:
            note += f"; {len(blocks) - 1} additional block(s) ignored"
    else:
        code = r.text.strip()
        note = "whole_text"
    if not code.strip():
        raise NoCodeFound(f"response for {case_id} contains no code")
    return SecurityTest(
        case_id=case_id,
        original_code=code,
        normalized_code=code,
        extraction_note=note,
    )
