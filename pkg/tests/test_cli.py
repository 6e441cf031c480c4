import json

import pytest

from sinktriage.cli import main

from conftest import CASSETTE, LABELS, MINIPROJ


def test_analyze_requires_provider_or_cassette(tmp_path):
    candidates = tmp_path / "candidates.jsonl"
    candidates.write_text("")
    with pytest.raises(SystemExit) as exc:
        main(["analyze", str(candidates), "-o", str(tmp_path / "v.jsonl")])
    assert exc.value.code == 2


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_scan_and_extract(tmp_path):
    manifest = tmp_path / "manifest.json"
    assert main(["scan", str(MINIPROJ), "-o", str(manifest)]) == 0
    doc = json.loads(manifest.read_text())
    assert doc["totals"]["python_files"] == 12

    candidates = tmp_path / "candidates.jsonl"
    blindspots = tmp_path / "blindspots.jsonl"
    rc = main(
        [
            "extract",
            str(manifest),
            "--project",
            "miniproj",
            "-o",
            str(candidates),
            "--files-dir",
            str(tmp_path / "files"),
            "--blindspots",
            str(blindspots),
        ]
    )
    assert rc == 0
    assert len(candidates.read_text().splitlines()) == 14
    assert len(list((tmp_path / "files").glob("*.py"))) == 14
    assert len(blindspots.read_text().splitlines()) == 6


def test_scan_missing_root_exits_1(tmp_path):
    assert main(["scan", str(tmp_path / "missing"), "-o", str(tmp_path / "m.json")]) == 1


def test_analyze_with_cassette(tmp_path):
    manifest = tmp_path / "manifest.json"
    candidates = tmp_path / "candidates.jsonl"
    verdicts = tmp_path / "verdicts.jsonl"
    main(["scan", str(MINIPROJ), "-o", str(manifest)])
    main(["extract", str(manifest), "--project", "miniproj", "-o", str(candidates)])
    rc = main(
        ["analyze", str(candidates), "--cassette", str(CASSETTE), "-o", str(verdicts)]
    )
    assert rc == 0
    rows = [json.loads(l) for l in verdicts.read_text().splitlines()]
    assert len(rows) == 14
    assert sum(1 for r in rows if r["vulnerable"]) == 7


def test_evaluate_without_labels_surfaces_unverified(tmp_path, capsys):
    manifest = tmp_path / "manifest.json"
    candidates = tmp_path / "candidates.jsonl"
    verdicts = tmp_path / "verdicts.jsonl"
    outcomes = tmp_path / "outcomes.jsonl"
    run_json = tmp_path / "run.json"
    main(["scan", str(MINIPROJ), "-o", str(manifest)])
    main(["extract", str(manifest), "--project", "miniproj", "-o", str(candidates)])
    main(["analyze", str(candidates), "--cassette", str(CASSETTE), "-o", str(verdicts)])
    outcomes.write_text("")  # no tests executed
    rc = main(
        [
            "evaluate",
            str(verdicts),
            str(outcomes),
            "--candidates",
            str(candidates),
            "--project",
            "miniproj",
            "-o",
            str(run_json),
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "Unverified=7" in out  # all seven "No" verdicts lack labels
    doc = json.loads(run_json.read_text())
    assert doc["unverified"]["total"] == 7


def test_config_file_supplies_provider_defaults(tmp_path):
    import argparse

    from sinktriage.cli import _provider_config

    config = {
        "provider": {
            "model_name": "conf-model",
            "temperature": 0.5,
            "rate_limit_per_minute": 30,
            "price_per_input_token": 3e-05,
        }
    }
    args = argparse.Namespace(provider=None, model=None, temperature=None, endpoint=None)
    cfg = _provider_config(args, config)
    assert cfg.model_name == "conf-model"
    assert cfg.temperature == 0.5
    assert cfg.rate_limit_per_minute == 30
    # flags still win over the config file
    args = argparse.Namespace(
        provider=None, model="flag-model", temperature=0.0, endpoint=None
    )
    assert _provider_config(args, config).model_name == "flag-model"
    assert _provider_config(args, config).temperature == 0.0


def test_config_file_supplies_exec_limits():
    import argparse

    from sinktriage.cli import _exec_settings

    config = {"exec": {"timeout_s": 12.5, "parallelism": 3, "runner_shim": "shim.py"}}
    args = argparse.Namespace(
        exec_timeout_s=None, exec_parallelism=None, runner_shim=None
    )
    limits, parallelism, runner = _exec_settings(args, config)
    assert limits.timeout_s == 12.5
    assert parallelism == 3
    assert runner == "shim.py"
    args = argparse.Namespace(
        exec_timeout_s=5.0, exec_parallelism=8, runner_shim="other.py"
    )
    limits, parallelism, runner = _exec_settings(args, config)
    assert limits.timeout_s == 5.0
    assert parallelism == 8
    assert runner == "other.py"
    # defaults when neither flags nor config provide values
    limits, parallelism, runner = _exec_settings(
        argparse.Namespace(exec_timeout_s=None, exec_parallelism=None, runner_shim=None),
        {},
    )
    assert limits.timeout_s == 30.0
    assert parallelism == 1
    assert runner is None


def test_baseline_subcommand(tmp_path):
    manifest = tmp_path / "manifest.json"
    candidates = tmp_path / "candidates.jsonl"
    findings = tmp_path / "baseline.jsonl"
    main(["scan", str(MINIPROJ), "-o", str(manifest)])
    main(["extract", str(manifest), "--project", "miniproj", "-o", str(candidates)])
    assert main(["baseline", str(candidates), "-o", str(findings)]) == 0
    assert len(findings.read_text().splitlines()) == 17


def test_pipeline_equals_manual_stages(tmp_path, monkeypatch):
    from sinktriage.extract import safe_case_filename
    from conftest import REPO_ROOT, write_replay_shim

    monkeypatch.chdir(REPO_ROOT)  # keep manifest root strings identical
    yes_cases = [
        "miniproj:shell_tools.py:list_child_pids:6",
        "miniproj:shell_tools.py:safe_count_lines:13",
        "miniproj:eval_utils.py:compute:6",
        "miniproj:from_import.py:sync_clock:4",
        "miniproj:exec_script.py:run_snippet:1",
        "miniproj:conda_env.py:list_envs:4",
        "miniproj:sub/multi.py:deploy:5",
    ]
    records = {}
    for case_id in yes_cases:
        case_dir = safe_case_filename(case_id).removesuffix(".py")
        records[f"{case_dir}/r0"] = {
            "status": "passed",
            "error_kind": None,
            "duration_ms": 1,
            "stdout": "",
            "stderr": "",
        }
    shim = write_replay_shim(tmp_path / "shim.py", records)

    pipe_out = tmp_path / "pipe"
    rc = main(
        [
            "pipeline",
            "tests/fixtures/miniproj",
            "--project",
            "miniproj",
            "--cassette",
            str(CASSETTE),
            "--labels",
            str(LABELS),
            "--runner-shim",
            str(shim),
            "-o",
            str(pipe_out),
        ]
    )
    assert rc == 0

    s = tmp_path / "stages"
    s.mkdir()
    main(["scan", "tests/fixtures/miniproj", "-o", str(s / "manifest.json")])
    main(
        [
            "extract",
            str(s / "manifest.json"),
            "--project",
            "miniproj",
            "-o",
            str(s / "candidates.jsonl"),
        ]
    )
    main(
        [
            "analyze",
            str(s / "candidates.jsonl"),
            "--cassette",
            str(CASSETTE),
            "-o",
            str(s / "verdicts.jsonl"),
        ]
    )
    main(
        [
            "gen-tests",
            str(s / "verdicts.jsonl"),
            "--candidates",
            str(s / "candidates.jsonl"),
            "--cassette",
            str(CASSETTE),
            "-o",
            str(s / "tests.jsonl"),
        ]
    )
    main(
        [
            "run-tests",
            str(s / "tests.jsonl"),
            "--candidates",
            str(s / "candidates.jsonl"),
            "--tests-dir",
            str(s / "tests-work"),
            "--runner-shim",
            str(shim),
            "-o",
            str(s / "outcomes.jsonl"),
        ]
    )
    rc = main(
        [
            "evaluate",
            str(s / "verdicts.jsonl"),
            str(s / "outcomes.jsonl"),
            "--candidates",
            str(s / "candidates.jsonl"),
            "--tests",
            str(s / "tests.jsonl"),
            "--labels",
            str(LABELS),
            "--project",
            "miniproj",
            "--model",
            "mock-model",
            "-o",
            str(s / "run.json"),
        ]
    )
    assert rc == 0

    pipe_doc = json.loads((pipe_out / "run.json").read_text())
    stage_doc = json.loads((s / "run.json").read_text())
    for key in ("classes", "counts", "metrics", "costs", "unverified", "candidates"):
        assert stage_doc[key] == pipe_doc[key]


def test_compare_subcommand(tmp_path):
    # build two tiny evaluated runs by hand
    def fake_run(name, tp, fp, tn, fn):
        return {
            "project": "p",
            "model_name": name,
            "manifest": None,
            "candidates": [],
            "extraction_skipped": [],
            "blindspots": [],
            "verdicts": [],
            "tests": [],
            "outcomes": [],
            "classes": {},
            "counts": [
                {"scope": "total", "tp": tp, "fp": fp, "tn": tn, "fn": fn, "invalid": 0}
            ],
            "unverified": {},
            "metrics": {},
            "costs": [],
            "baseline": None,
            "labels": [],
            "comparison": None,
        }

    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    a.write_text(json.dumps(fake_run("model-a", 67, 31, 75, 15)))
    b.write_text(json.dumps(fake_run("model-b", 81, 103, 3, 1)))
    out = tmp_path / "comparison.json"
    assert main(["compare", str(a), str(b), "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["reference"] == "model-a"
    row_b = next(r for r in doc["rows"] if r["model_name"] == "model-b")
    assert row_b["deltas"]["accuracy"] == pytest.approx(-0.308, abs=0.002)
