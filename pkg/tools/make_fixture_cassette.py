#!/usr/bin/env python3
"""Regenerate the checked-in replay cassette for the fixture corpus.

The canned responses encode one of each downstream outcome: direct
exploits, a blocked injection, missing-import and missing-function tests
that the auto-fixer repairs, an unrunnable test that needs an
unavailable package, and a test whose assertions are miswritten while
the injected command still fires.

Run from the repo root:  python tools/make_fixture_cassette.py
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from sinktriage.corpus import scan_repo
from sinktriage.extract import extract_corpus
from sinktriage.llm import (
    AnalysisVerdict,
    RawResponse,
    build_analysis_prompt,
    build_testgen_prompt,
    parse_verdict,
    prompt_digest,
)
from sinktriage.sinks import default_catalog

FIXTURES = REPO / "tests" / "fixtures"

# function name -> (vulnerable?, justification)
ANALYSIS: dict[str, tuple[bool, str]] = {
    "list_child_pids": (
        True,
        "The pid parameter is interpolated into a shell string executed with "
        "shell=True, so a crafted pid appends arbitrary commands.",
    ),
    "safe_count_lines": (
        True,
        "The path parameter is interpolated into a shell string executed with "
        "shell=True; a crafted path can chain extra commands.",
    ),
    "compute": (
        True,
        "The expr parameter reaches eval/exec unfiltered, so any caller-controlled "
        "expression executes arbitrary code.",
    ),
    "render_config": (
        False,
        "The evaluated expression comes from a module constant, not from caller input.",
    ),
    "run_tool": (
        False,
        "The command is passed as an argument vector without a shell, so no shell "
        "metacharacters are interpreted.",
    ),
    "answer": (
        False,
        "eval is applied to a fixed literal string; nothing is attacker-controlled.",
    ),
    "git_version": (
        False,
        "Both invocations use fixed argument vectors without a shell.",
    ),
    "sync_clock": (
        True,
        "The host parameter is interpolated into a shell command run with "
        "shell=True, allowing command chaining.",
    ),
    "runner": (
        False,
        "The command string is whitespace-trimmed caller input, but the enclosing "
        "factory is only used with constants.",
    ),
    "<module>": (
        False,
        "The module-level command is a fixed echo with no external input.",
    ),
    "run_snippet": (
        True,
        "The code parameter is passed to exec verbatim, so callers can execute "
        "arbitrary statements.",
    ),
    "list_envs": (
        True,
        "The command string runs under a shell; wrappers that build it from user "
        "input enable injection.",
    ),
    "deploy": (
        True,
        "The target parameter is interpolated into an os.system string, so a "
        "crafted target appends arbitrary commands.",
    ),
    "restart": (
        False,
        "The service name is interpolated, but the method is only reachable from "
        "a fixed-entry admin table.",
    ),
}

# function name -> generated unittest source (the [CODE] slot)
TEST_CODE: dict[str, str] = {
    "list_child_pids": '''\
import os
import subprocess
import unittest


def list_child_pids(pid):
    proc = subprocess.Popen(args=f"pgrep -P {pid}", shell=True, stdout=subprocess.PIPE)
    proc.wait()
    out = proc.stdout.read().decode("utf-8").rstrip()
    return [int(p) for p in out.split("\\n") if p]


class TestListChildPids(unittest.TestCase):
    def test_command_injection_deletes_file(self):
        self.assertTrue(os.path.exists("sentinel.txt"))
        list_child_pids("1; rm -f sentinel.txt")
        self.assertFalse(os.path.exists("sentinel.txt"))


if __name__ == "__main__":
    unittest.main()
''',
    "safe_count_lines": '''\
import os
import subprocess
import unittest


def safe_count_lines(path):
    if not str(path).isalnum():
        raise ValueError("suspicious path rejected")
    return subprocess.check_output(f"wc -l {path}", shell=True)


class TestSafeCountLines(unittest.TestCase):
    def test_command_injection_deletes_file(self):
        self.assertTrue(os.path.exists("sentinel.txt"))
        try:
            safe_count_lines("x; rm -f sentinel.txt")
        except ValueError:
            pass
        self.assertFalse(os.path.exists("sentinel.txt"))


if __name__ == "__main__":
    unittest.main()
''',
    "compute": '''\
import os
import unittest


def compute(expr, mode="eval"):
    if mode == "exec":
        exec(expr)
        return None
    return eval(expr)


class TestCompute(unittest.TestCase):
    def test_injection_via_eval(self):
        self.assertTrue(os.path.exists("sentinel.txt"))
        compute("__import__('os').remove('sentinel.txt')")
        self.assertFalse(os.path.exists("sentinel.txt"))


if __name__ == "__main__":
    unittest.main()
''',
    # first run fails with NameError: name 'os' is not defined
    "sync_clock": '''\
from subprocess import run as launch
import unittest


def sync_clock(host):
    return launch(f"ntpdate {host}", shell=True)


class TestSyncClock(unittest.TestCase):
    def test_command_injection_deletes_file(self):
        self.assertTrue(os.path.exists("sentinel.txt"))
        sync_clock("pool.example.org; rm -f sentinel.txt")
        self.assertFalse(os.path.exists("sentinel.txt"))


if __name__ == "__main__":
    unittest.main()
''',
    # first run fails with NameError: name 'run_snippet' is not defined
    "run_snippet": '''\
import os
import unittest


class TestRunSnippet(unittest.TestCase):
    def test_exec_injection_deletes_file(self):
        self.assertTrue(os.path.exists("sentinel.txt"))
        run_snippet("import os\\nos.remove('sentinel.txt')", {})
        self.assertFalse(os.path.exists("sentinel.txt"))


if __name__ == "__main__":
    unittest.main()
''',
    # unrunnable: depends on a package that is not installed
    "list_envs": '''\
import conda
import os
import subprocess
import unittest


def list_envs():
    return subprocess.check_output("conda env list", shell=True)


class TestListEnvs(unittest.TestCase):
    def test_command_injection_deletes_file(self):
        conda.run_command("activate", "base; rm -f sentinel.txt")
        self.assertFalse(os.path.exists("sentinel.txt"))


if __name__ == "__main__":
    unittest.main()
''',
    # assertions miswritten: expects the sentinel to survive, but the
    # injected command deletes it
    "deploy": '''\
import os
import subprocess
import unittest


def deploy(target):
    os.system(f"rsync -a build/ {target}")
    subprocess.call(["systemctl", "restart", "app"])


class TestDeploy(unittest.TestCase):
    def test_command_injection(self):
        try:
            deploy("x; rm -f sentinel.txt")
        except Exception:
            pass
        self.assertTrue(os.path.exists("sentinel.txt"))


if __name__ == "__main__":
    unittest.main()
''',
}

# invented but stable per-case latency/token figures
ANALYSIS_COST = {
    "list_child_pids": (3.20, 410, 96),
    "safe_count_lines": (2.85, 420, 88),
    "compute": (2.10, 360, 74),
    "render_config": (0.95, 340, 40),
    "run_tool": (1.15, 380, 52),
    "answer": (0.70, 320, 30),
    "git_version": (0.90, 350, 36),
    "sync_clock": (2.40, 355, 80),
    "runner": (1.05, 345, 48),
    "<module>": (0.80, 330, 34),
    "run_snippet": (1.90, 335, 66),
    "list_envs": (2.60, 340, 72),
    "deploy": (3.05, 400, 90),
    "restart": (1.00, 350, 44),
}

TESTGEN_COST = {
    "list_child_pids": (6.4, 620, 230),
    "safe_count_lines": (5.9, 630, 240),
    "compute": (4.8, 570, 190),
    "sync_clock": (5.2, 565, 200),
    "run_snippet": (4.5, 545, 170),
    "list_envs": (5.0, 550, 210),
    "deploy": (6.1, 610, 220),
}


def main() -> None:
    manifest = scan_repo(FIXTURES / "miniproj")
    cset = extract_corpus(manifest, default_catalog(), project="miniproj")
    entries = []
    for c in cset.candidates:
        vulnerable, justification = ANALYSIS[c.function_name]
        text = f"VERDICT: {'Yes' if vulnerable else 'No'}\n{justification}"
        latency, tok_in, tok_out = ANALYSIS_COST[c.function_name]
        bundle = build_analysis_prompt(c)
        entries.append(
            {
                "prompt_sha256": prompt_digest(bundle),
                "response": text,
                "latency_s": latency,
                "input_tokens": tok_in,
                "output_tokens": tok_out,
            }
        )
        verdict = parse_verdict(c.case_id, RawResponse(text, latency))
        if isinstance(verdict, AnalysisVerdict) and verdict.vulnerable:
            code = TEST_CODE[c.function_name]
            t_latency, t_in, t_out = TESTGEN_COST[c.function_name]
            t_bundle = build_testgen_prompt(c, verdict.justification)
            entries.append(
                {
                    "prompt_sha256": prompt_digest(t_bundle),
                    "response": f"```python\n{code}```",
                    "latency_s": t_latency,
                    "input_tokens": t_in,
                    "output_tokens": t_out,
                }
            )
    out = FIXTURES / "cassettes" / "miniproj.json"
    out.write_text(json.dumps(entries, indent=2) + "\n", "utf-8")
    print(f"wrote {len(entries)} entries -> {out}")


if __name__ == "__main__":
    main()
