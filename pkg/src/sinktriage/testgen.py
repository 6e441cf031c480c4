"""Normalize generated security tests into runnable files.

Hand-fixing of broken generated tests is mechanized for the three
failure categories that dominate in practice: a missing standard-library
import, a hardcoded absolute path, and a call to the function under test
without its definition. Anything else is unfixable and the case is
classified Invalid. ``directly_runnable`` records whether the FIRST
execution was decisive (confirmed or refuted) with zero fixes applied.
"""

from __future__ import annotations

import ast
import re
import sys
import textwrap
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING

from .errors import NoCodeFound, UnfixableTest

if TYPE_CHECKING:
    from .extract import CandidateFunction
    from .sandbox import ExecutionOutcome

SENTINEL_NAME = "sentinel.txt"
TEST_FILENAME = "test_case.py"

FIX_ADDED_IMPORT = "added_import"
FIX_REWROTE_PATH = "rewrote_path"
FIX_INLINED_SOURCE = "inlined_source_function"


@dataclass(frozen=True)
class SecurityTest:
    case_id: str
    original_code: str
    normalized_code: str
    directly_runnable: bool | None = None  # set after the first execution
    applied_fixes: tuple[str, ...] = field(default_factory=tuple)
    extraction_note: str = ""

    def __post_init__(self) -> None:
        if not self.applied_fixes and self.normalized_code != self.original_code:
            raise ValueError("normalized_code differs but no fix recorded")


def materialize(t: SecurityTest, workdir: str | Path) -> Path:
    """Write the test file plus the sentinel data file into an empty workdir.

    The sentinel's pre/post existence is checked by the sandbox
    independently of the test's own assertions.
    """
    workdir = Path(workdir)
    if not workdir.is_dir():
        raise OSError(f"workdir does not exist: {workdir}")
    if any(workdir.iterdir()):
        raise OSError(f"workdir not empty: {workdir}")
    if not t.normalized_code.strip():
        raise NoCodeFound(f"test for {t.case_id} is empty")
    try:
        ast.parse(t.normalized_code)
    except SyntaxError as exc:
        raise NoCodeFound(
            f"test for {t.case_id} is not valid Python: {exc.msg}"
        ) from exc
    test_path = workdir / TEST_FILENAME
    test_path.write_text(t.normalized_code, encoding="utf-8")
    (workdir / SENTINEL_NAME).write_text("sentinel\n", encoding="utf-8")
    return test_path


_NAME_ERROR = re.compile(r"NameError: name '([A-Za-z_][A-Za-z0-9_]*)' is not defined")
_NO_MODULE = re.compile(r"No module named '?([A-Za-z_][A-Za-z0-9_.]*)'?")
_ABS_PATH_LITERAL = re.compile(r"(['\"])(/(?:[^'\"\n]+/)*[^'\"\n]+)\1")


def _is_stdlib(name: str) -> bool:
    top = name.split(".")[0]
    return top in sys.stdlib_module_names


def _module_names_in(code: str) -> set[str]:
    try:
        tree = ast.parse(code)
    except SyntaxError:
        return set()
    names: set[str] = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            names.update(a.name.split(".")[0] for a in node.names)
        elif isinstance(node, ast.ImportFrom) and node.module:
            names.add(node.module.split(".")[0])
    return names


def _defined_names_in(code: str) -> set[str]:
    try:
        tree = ast.parse(code)
    except SyntaxError:
        return set()
    return {
        node.name
        for node in ast.walk(tree)
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef))
    }


def _prepend(code: str, block: str) -> str:
    return block.rstrip("\n") + "\n" + code


def auto_fix(
    t: SecurityTest,
    c: "CandidateFunction",
    outcome: "ExecutionOutcome | None" = None,
) -> SecurityTest:
    """Apply at most the three mechanized fixes, driven by the classified
    first-run failure. Raises UnfixableTest when nothing applies.

    Idempotent: a test whose failure evidence names nothing new is
    returned unchanged.
    """
    error_text = ""
    error_kind = None
    if outcome is not None:
        error_text = (outcome.stderr_excerpt or "") + "\n" + (outcome.stdout_excerpt or "")
        error_kind = outcome.error_kind
    if outcome is None or not error_text.strip():
        return t

    code = t.normalized_code
    fixes = list(t.applied_fixes)
    recognized = False

    # 1. inline the function under test if it is referenced but absent
    m = _NAME_ERROR.search(error_text)
    if m:
        recognized = True
        name = m.group(1)
        if (
            name == c.function_name
            and not c.is_module_level
            and name not in _defined_names_in(code)
        ):
            inlined = textwrap.dedent(c.source_text)
            code = _prepend(code, inlined)
            fixes.append(FIX_INLINED_SOURCE)
            # the inlined body may itself need imports
            for mod in ("os", "subprocess"):
                if re.search(rf"\b{mod}\.", inlined) and mod not in _module_names_in(code):
                    code = _prepend(code, f"import {mod}")
                    if FIX_ADDED_IMPORT not in fixes:
                        fixes.append(FIX_ADDED_IMPORT)
        # 2. add a missing standard-library import named in the error
        elif _is_stdlib(name) and name not in _module_names_in(code):
            code = _prepend(code, f"import {name}")
            fixes.append(FIX_ADDED_IMPORT)

    nm = _NO_MODULE.search(error_text)
    if nm:
        recognized = True
        missing = nm.group(1).split(".")[0]
        if not _is_stdlib(missing):
            raise UnfixableTest(
                f"{t.case_id}: requires unavailable package {missing!r}"
            )
        if missing not in _module_names_in(code):
            code = _prepend(code, f"import {missing}")
            fixes.append(FIX_ADDED_IMPORT)

    # 3. rewrite absolute paths to workdir-relative ones
    if error_kind == "path_error":
        recognized = True
        if code == t.normalized_code:
            def _relativize(match: re.Match) -> str:
                quote, path = match.group(1), match.group(2)
                return f"{quote}{Path(path).name}{quote}"

            rewritten = _ABS_PATH_LITERAL.sub(_relativize, code)
            if rewritten != code:
                code = rewritten
                fixes.append(FIX_REWROTE_PATH)

    if code == t.normalized_code:
        if recognized:
            # evidence names nothing new: the fix is already in place
            return t
        raise UnfixableTest(f"{t.case_id}: no mechanized fix applies")

    return replace(
        t,
        normalized_code=code,
        applied_fixes=tuple(fixes),
        directly_runnable=False,
    )
