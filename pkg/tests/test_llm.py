import json
import os

import pytest
from hypothesis import given, strategies as st

from sinktriage.errors import (
    CassetteMiss,
    NoCodeFound,
    ProviderRejected,
    ProviderTimeout,
)
from sinktriage.llm import (
    AnalysisVerdict,
    HttpProvider,
    MockProvider,
    ParseFailure,
    ProviderConfig,
    RawResponse,
    ReplayProvider,
    TESTGEN_REQUIREMENTS,
    api_key_env_var,
    build_analysis_prompt,
    build_testgen_prompt,
    parse_test_code,
    parse_verdict,
    prompt_digest,
    save_cassette,
    submit,
)

from conftest import CASSETTE, GOLDENS


@pytest.fixture()
def lead_candidate(miniproj_candidates):
    return miniproj_candidates.by_id("miniproj:shell_tools.py:list_child_pids:6")


# ---------------------------------------------------------------------------
# prompt construction

def test_analysis_prompt_contains_mimic_directive(lead_candidate):
    bundle = build_analysis_prompt(lead_candidate)
    assert "10 times" in bundle.system_text
    assert bundle.stage == "analysis"
    assert bundle.candidate_ref == lead_candidate.case_id


def test_analysis_prompt_embeds_source_unmodified(lead_candidate):
    bundle = build_analysis_prompt(lead_candidate)
    assert lead_candidate.source_text in bundle.user_text
    assert 'exactly "VERDICT: Yes" or "VERDICT: No"' in bundle.user_text


def test_analysis_prompt_unicode_pass_through(catalog):
    from sinktriage.extract import extract_from_source

    src = "import os\n\ndef 启动(命令):\n    os.system(命令)\n"
    (c,) = extract_from_source(src, catalog, project="p", relative_path="f.py")
    bundle = build_analysis_prompt(c)
    assert c.source_text in bundle.user_text


def test_analysis_prompt_matches_golden(lead_candidate):
    bundle = build_analysis_prompt(lead_candidate)
    rendered = f"[SYSTEM]\n{bundle.system_text}\n[USER]\n{bundle.user_text}\n"
    golden = (GOLDENS / "analysis_prompt_list_child_pids.txt").read_text("utf-8")
    assert rendered == golden


def test_prompt_determinism(lead_candidate):
    a = build_analysis_prompt(lead_candidate)
    b = build_analysis_prompt(lead_candidate)
    assert a == b
    assert prompt_digest(a) == prompt_digest(b)


def test_testgen_prompt_contains_all_seven_requirements(lead_candidate):
    bundle = build_testgen_prompt(lead_candidate, "shell interpolation")
    assert len(TESTGEN_REQUIREMENTS) == 7
    for req in TESTGEN_REQUIREMENTS:
        assert req in bundle.user_text
    assert "Only generate the code" in bundle.user_text
    assert lead_candidate.source_text in bundle.user_text
    assert "shell interpolation" in bundle.user_text


def test_testgen_prompt_requirement_bullets_one_per_line(lead_candidate):
    bundle = build_testgen_prompt(lead_candidate, "why")
    lines = bundle.user_text.splitlines()
    bullet_lines = [l for l in lines if l.startswith("- ")]
    assert [l[2:] for l in bullet_lines] == list(TESTGEN_REQUIREMENTS)


def test_testgen_prompt_empty_justification(lead_candidate):
    bundle = build_testgen_prompt(lead_candidate, "")
    assert bundle.stage == "testgen"
    for req in TESTGEN_REQUIREMENTS:
        assert req in bundle.user_text


# ---------------------------------------------------------------------------
# verdict parsing

def test_parse_verdict_yes():
    v = parse_verdict("c1", RawResponse("VERDICT: Yes\nBecause shell=True.", 0.1))
    assert isinstance(v, AnalysisVerdict)
    assert v.vulnerable is True
    assert v.justification == "Because shell=True."


def test_parse_verdict_no_bare():
    v = parse_verdict("c1", RawResponse("VERDICT: No", 0.1))
    assert isinstance(v, AnalysisVerdict)
    assert v.vulnerable is False
    assert v.justification == ""


def test_parse_verdict_case_insensitive():
    v = parse_verdict("c1", RawResponse("verdict: YES\nreason", 0.1))
    assert isinstance(v, AnalysisVerdict)
    assert v.vulnerable is True


def test_parse_verdict_malformed():
    v = parse_verdict("c1", RawResponse("The function looks risky to me.", 0.1))
    assert isinstance(v, ParseFailure)


def test_parse_verdict_yes_without_justification_gets_placeholder():
    v = parse_verdict("c1", RawResponse("VERDICT: Yes", 0.1))
    assert isinstance(v, AnalysisVerdict)
    assert v.justification != ""


@given(st.text(max_size=400))
def test_parse_verdict_is_total(text):
    result = parse_verdict("case", RawResponse(text, 0.0))
    assert isinstance(result, (AnalysisVerdict, ParseFailure))


# ---------------------------------------------------------------------------
# test-code parsing

def test_parse_test_code_single_fence():
    r = RawResponse("Here you go:\n```python\nimport unittest\n```\ndone", 0.1)
    t = parse_test_code("c1", r)
    assert t.original_code == "import unittest"
    assert t.extraction_note == "first_fenced_block"


def test_parse_test_code_two_fences_takes_first():
    r = RawResponse("```python\nfirst = 1\n```\n```python\nsecond = 2\n```", 0.1)
    t = parse_test_code("c1", r)
    assert t.original_code == "first = 1"
    assert "ignored" in t.extraction_note


def test_parse_test_code_unfenced():
    r = RawResponse("import unittest\nx = 1\n", 0.1)
    t = parse_test_code("c1", r)
    assert t.original_code == "import unittest\nx = 1"
    assert t.extraction_note == "whole_text"


def test_parse_test_code_empty():
    with pytest.raises(NoCodeFound):
        parse_test_code("c1", RawResponse("   \n", 0.1))


# ---------------------------------------------------------------------------
# providers

def test_mock_provider_keyed_on_digest(lead_candidate):
    bundle = build_analysis_prompt(lead_candidate)
    provider = MockProvider({prompt_digest(bundle): "VERDICT: Yes\ncanned"})
    r = provider.send(bundle)
    assert r.text == "VERDICT: Yes\ncanned"
    assert r.latency_s == 0.0


def test_replay_provider_byte_identical(lead_candidate):
    bundle = build_analysis_prompt(lead_candidate)
    a = ReplayProvider(CASSETTE).send(bundle)
    b = ReplayProvider(CASSETTE).send(bundle)
    assert a == b
    assert a.text.startswith("VERDICT:")


def test_replay_provider_cassette_miss(tmp_path, lead_candidate):
    path = tmp_path / "cassette.json"
    save_cassette([], path)
    provider = ReplayProvider(path)
    with pytest.raises(CassetteMiss):
        provider.send(build_analysis_prompt(lead_candidate))


class _AlwaysTimeout:
    def __init__(self):
        self.calls = 0

    def send(self, bundle):
        self.calls += 1
        raise ProviderTimeout("unreachable")


def test_submit_retries_then_raises(lead_candidate):
    provider = _AlwaysTimeout()
    cfg = ProviderConfig(max_retries=2)
    naps = []
    with pytest.raises(ProviderTimeout):
        submit(build_analysis_prompt(lead_candidate), cfg, provider, _sleep=naps.append)
    assert provider.calls == 3
    assert len(naps) == 2


class _AlwaysRejected:
    def __init__(self):
        self.calls = 0

    def send(self, bundle):
        self.calls += 1
        raise ProviderRejected("bad key")


def test_submit_does_not_retry_rejection(lead_candidate):
    provider = _AlwaysRejected()
    with pytest.raises(ProviderRejected):
        submit(build_analysis_prompt(lead_candidate), ProviderConfig(), provider)
    assert provider.calls == 1


def test_http_provider_payload_temperature_zero(lead_candidate):
    captured = {}

    def transport(url, payload, headers, timeout):
        captured.update(payload=payload, url=url, headers=headers)
        return {
            "choices": [{"message": {"content": "VERDICT: No"}}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 2},
        }

    cfg = ProviderConfig(provider_id="acme", endpoint_url="https://example.invalid/v1")
    provider = HttpProvider(cfg, transport=transport)
    r = provider.send(build_analysis_prompt(lead_candidate))
    assert captured["payload"]["temperature"] == 0.0
    assert captured["payload"]["messages"][0]["role"] == "system"
    assert r.input_tokens == 10
    assert r.output_tokens == 2


def test_http_provider_requires_endpoint():
    with pytest.raises(ProviderRejected):
        HttpProvider(ProviderConfig(provider_id="acme", endpoint_url=None))


def test_api_key_env_var_naming():
    assert api_key_env_var("openai") == "OPENAI_API_KEY"
    assert api_key_env_var("my-provider.v2") == "MY_PROVIDER_V2_API_KEY"


def test_api_key_sent_when_configured(lead_candidate, monkeypatch):
    captured = {}

    def transport(url, payload, headers, timeout):
        captured["headers"] = headers
        return {"choices": [{"message": {"content": "VERDICT: No"}}]}

    monkeypatch.setenv("ACME_API_KEY", "sk-test")
    cfg = ProviderConfig(provider_id="acme", endpoint_url="https://example.invalid/v1")
    HttpProvider(cfg, transport=transport).send(build_analysis_prompt(lead_candidate))
    assert captured["headers"]["Authorization"] == "Bearer sk-test"


def test_rate_limiter_spaces_acquisitions():
    import time

    from sinktriage.llm import RateLimiter

    limiter = RateLimiter(per_minute=1200)  # 50 ms interval
    started = time.monotonic()
    for _ in range(3):
        limiter.acquire()
    assert time.monotonic() - started >= 0.09  # two full intervals
