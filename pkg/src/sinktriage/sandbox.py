"""Isolated execution of generated security tests.

Isolation is process-level: fresh workdir, scrubbed environment, wall
clock timeout with process-tree kill. That is adequate for fixture
exploits (file deletion inside a temp dir) and NOT safe for adversarial
inputs.

The child is the runner shim, a separate stdlib-only program that prints
one JSON record on stdout: {"status": "passed"|"failed"|"error",
"error_kind": str|null, "duration_ms": int, "stdout": str, "stderr": str}.
"""

from __future__ import annotations

import importlib.util
import json
import os
import signal
import subprocess
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import RunnerNotFound, WorkspaceError
from .testgen import SENTINEL_NAME

STATUS_CONFIRMED = "confirmed"
STATUS_REFUTED = "refuted"
STATUS_INVALID = "invalid"

KIND_IMPORT = "import_error"
KIND_PATH = "path_error"
KIND_TIMEOUT = "timeout"
KIND_RUNNER_CRASH = "runner_crash"
KIND_OTHER = "other"

DEFAULT_RUNNER_MODULE = "testshim"
RUNNER_ENV_VAR = "SINKTRIAGE_RUNNER"


@dataclass(frozen=True)
class ResourceLimits:
    timeout_s: float = 30.0
    grace_s: float = 2.0
    output_limit: int = 8192


@dataclass(frozen=True)
class ExecutionOutcome:
    case_id: str
    status: str  # confirmed | refuted | invalid
    error_kind: str | None
    duration_s: float
    sentinel_deleted: bool
    stdout_excerpt: str = ""
    stderr_excerpt: str = ""


def resolve_runner(runner: str | Sequence[str] | None = None) -> list[str]:
    """Resolve the runner shim into an argv prefix.

    Accepts an explicit argv sequence, a script path, or an importable
    module name; with no argument, the SINKTRIAGE_RUNNER environment
    variable is consulted, then the default shim module.
    """
    if runner is None:
        runner = os.environ.get(RUNNER_ENV_VAR) or None
    if runner is None:
        if importlib.util.find_spec(DEFAULT_RUNNER_MODULE) is not None:
            return [sys.executable, "-m", DEFAULT_RUNNER_MODULE]
        raise RunnerNotFound(
            f"no runner shim: module {DEFAULT_RUNNER_MODULE!r} is not installed "
            f"and {RUNNER_ENV_VAR} is unset"
        )
    if isinstance(runner, (list, tuple)):
        return list(runner)
    path = Path(runner)
    if path.exists():
        return [sys.executable, str(path.resolve())]
    try:
        if importlib.util.find_spec(str(runner)) is not None:
            return [sys.executable, "-m", str(runner)]
    except (ImportError, ValueError):
        pass
    raise RunnerNotFound(f"runner shim not found: {runner!r}")


def _scrubbed_env(workdir: Path) -> dict[str, str]:
    # minimal PATH, no proxy variables, tmp confined to the workdir
    return {
        "PATH": "/usr/bin:/bin",
        "HOME": str(workdir),
        "TMPDIR": str(workdir),
        "LC_ALL": "C.UTF-8",
        "PYTHONDONTWRITEBYTECODE": "1",
        "PYTHONIOENCODING": "utf-8",
    }


def classify_error_kind(exception_name: str | None) -> str:
    if exception_name in ("ImportError", "ModuleNotFoundError"):
        return KIND_IMPORT
    if exception_name in (
        "FileNotFoundError",
        "NotADirectoryError",
        "IsADirectoryError",
        "PermissionError",
    ):
        return KIND_PATH
    return KIND_OTHER


def map_outcome(
    shim_status: str | None,
    sentinel_deleted: bool,
    error_kind: str | None = None,
) -> tuple[str, str | None]:
    """Pure (shim status, sentinel state) -> (outcome status, error kind).

    The sentinel override wins regardless of the reported status: an
    exploit that demonstrably ran proves the vulnerability even when the
    test's own assertions were miswritten.
    """
    if sentinel_deleted:
        return STATUS_CONFIRMED, None
    if shim_status == "passed":
        return STATUS_CONFIRMED, None
    if shim_status == "failed":
        return STATUS_REFUTED, None
    return STATUS_INVALID, error_kind or KIND_OTHER


def _parse_record(stdout: bytes) -> dict | None:
    for line in reversed(stdout.decode("utf-8", errors="replace").splitlines()):
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError:
            return None
        return doc if isinstance(doc, dict) and "status" in doc else None
    return None


def execute(
    test_path: str | Path,
    limits: ResourceLimits = ResourceLimits(),
    runner: str | Sequence[str] | None = None,
    case_id: str | None = None,
) -> ExecutionOutcome:
    """Run one materialized test in its workdir and classify the outcome."""
    test_path = Path(test_path)
    workdir = test_path.parent
    if not workdir.is_dir() or not test_path.is_file():
        raise WorkspaceError(f"test not materialized: {test_path}")
    case_id = case_id or test_path.stem
    argv = resolve_runner(runner) + [test_path.name]
    cut = limits.output_limit

    started = time.monotonic()
    try:
        proc = subprocess.Popen(
            argv,
            cwd=workdir,
            env=_scrubbed_env(workdir),
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            start_new_session=True,
        )
    except OSError as exc:
        raise RunnerNotFound(f"cannot spawn runner {argv[0]!r}: {exc}") from exc

    timed_out = False
    try:
        stdout, stderr = proc.communicate(timeout=limits.timeout_s)
    except subprocess.TimeoutExpired:
        timed_out = True
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            proc.kill()
        stdout, stderr = proc.communicate()
    duration = time.monotonic() - started

    sentinel_deleted = not (workdir / SENTINEL_NAME).exists()

    if timed_out:
        status, kind = map_outcome(None, sentinel_deleted, KIND_TIMEOUT)
        return ExecutionOutcome(
            case_id=case_id,
            status=status,
            error_kind=kind,
            duration_s=duration,
            sentinel_deleted=sentinel_deleted,
            stdout_excerpt=stdout.decode("utf-8", "replace")[:cut],
            stderr_excerpt=stderr.decode("utf-8", "replace")[:cut],
        )

    record = _parse_record(stdout)
    if record is None or proc.returncode != 0:
        status, kind = map_outcome(None, sentinel_deleted, KIND_RUNNER_CRASH)
        return ExecutionOutcome(
            case_id=case_id,
            status=status,
            error_kind=kind,
            duration_s=duration,
            sentinel_deleted=sentinel_deleted,
            stdout_excerpt=stdout.decode("utf-8", "replace")[:cut],
            stderr_excerpt=stderr.decode("utf-8", "replace")[:cut],
        )

    kind = None
    if record["status"] == "error":
        kind = classify_error_kind(record.get("error_kind"))
    status, kind = map_outcome(record["status"], sentinel_deleted, kind)
    return ExecutionOutcome(
        case_id=case_id,
        status=status,
        error_kind=kind,
        duration_s=duration,
        sentinel_deleted=sentinel_deleted,
        stdout_excerpt=str(record.get("stdout", ""))[:cut],
        stderr_excerpt=str(record.get("stderr", ""))[:cut],
    )


def execute_many(
    jobs: Sequence[tuple[str, Path]],
    limits: ResourceLimits = ResourceLimits(),
    runner: str | Sequence[str] | None = None,
    parallelism: int = 1,
) -> list[ExecutionOutcome]:
    """Execute (case_id, test_path) jobs, each in its own workdir."""
    if parallelism <= 1:
        return [execute(p, limits, runner, case_id=cid) for cid, p in jobs]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [
            pool.submit(execute, p, limits, runner, case_id=cid) for cid, p in jobs
        ]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# serialization

def outcome_to_dict(o: ExecutionOutcome) -> dict:
    return {
        "case_id": o.case_id,
        "status": o.status,
        "error_kind": o.error_kind,
        "duration_s": o.duration_s,
        "sentinel_deleted": o.sentinel_deleted,
        "stdout_excerpt": o.stdout_excerpt,
        "stderr_excerpt": o.stderr_excerpt,
    }


def outcome_from_dict(d: dict) -> ExecutionOutcome:
    return ExecutionOutcome(
        case_id=d["case_id"],
        status=d["status"],
        error_kind=d.get("error_kind"),
        duration_s=d["duration_s"],
        sentinel_deleted=d["sentinel_deleted"],
        stdout_excerpt=d.get("stdout_excerpt", ""),
        stderr_excerpt=d.get("stderr_excerpt", ""),
    )
