"""Minimal in-interpreter shim: load one test file, run its unittest
cases, print exactly one JSON record on stdout.

Record schema (one line, nothing else on stdout):
    {"status": "passed"|"failed"|"error", "error_kind": str|null,
     "duration_ms": int, "stdout": str, "stderr": str}

Test output is captured at the file-descriptor level, so even child
processes spawned by the test cannot write past the record. The shim
imports nothing beyond the standard library.
"""

from __future__ import annotations

import importlib.util
import json
import os
import sys
import tempfile
import time
import traceback
import unittest

OUTPUT_LIMIT = 8192  # bytes kept from each captured stream


class _RecordingResult(unittest.TextTestResult):
    """Remembers the exception class behind each non-assertion error."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.error_kinds: list[str] = []

    def addError(self, test, err):
        super().addError(test, err)
        self.error_kinds.append(err[0].__name__)


class _FdCapture:
    """Redirect fds 1 and 2 into temp files for the capture window."""

    def __enter__(self):
        sys.stdout.flush()
        sys.stderr.flush()
        self._saved = (os.dup(1), os.dup(2))
        self._files = (tempfile.TemporaryFile(), tempfile.TemporaryFile())
        os.dup2(self._files[0].fileno(), 1)
        os.dup2(self._files[1].fileno(), 2)
        return self

    def __exit__(self, *exc):
        sys.stdout.flush()
        sys.stderr.flush()
        os.dup2(self._saved[0], 1)
        os.dup2(self._saved[1], 2)
        for fd in self._saved:
            os.close(fd)
        self.stdout, self.stderr = (self._read(f) for f in self._files)
        for f in self._files:
            f.close()
        return False

    @staticmethod
    def _read(f) -> str:
        f.seek(0)
        data = f.read()
        return data[:OUTPUT_LIMIT].decode("utf-8", errors="replace")


def run_test_file(path: str) -> dict:
    """Run one test file and return the result record as a dict."""
    started = time.monotonic()
    status = "error"
    error_kind: str | None = None

    with _FdCapture() as cap:
        try:
            spec = importlib.util.spec_from_file_location("candidate_test", path)
            if spec is None or spec.loader is None:
                raise ImportError(f"cannot load {path}")
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
        except BaseException as exc:  # import-time failure of any kind
            error_kind = type(exc).__name__
            traceback.print_exc(file=sys.stderr)
        else:
            suite = unittest.defaultTestLoader.loadTestsFromModule(module)
            if suite.countTestCases() == 0:
                error_kind = "NoTestsFound"
            else:
                runner = unittest.TextTestRunner(
                    stream=sys.stderr,  # fd 2 is captured here
                    verbosity=2,
                    resultclass=_RecordingResult,
                )
                result = runner.run(suite)
                if result.error_kinds:
                    status, error_kind = "error", result.error_kinds[0]
                elif result.failures:
                    status = "failed"
                else:
                    status = "passed"

    duration_ms = int((time.monotonic() - started) * 1000)
    return {
        "status": status,
        "error_kind": error_kind,
        "duration_ms": duration_ms,
        "stdout": cap.stdout,
        "stderr": cap.stderr,
    }


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python -m testshim <test_file.py>", file=sys.stderr)
        return 2
    if not os.path.exists(argv[0]):
        print(f"no such file: {argv[0]}", file=sys.stderr)
        return 2
    record = run_test_file(argv[0])
    sys.stdout.write(json.dumps(record) + "\n")
    sys.stdout.flush()
    return 0
