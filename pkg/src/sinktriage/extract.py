"""Candidate extraction: find every function that calls a catalog sink.

Parsing is stdlib ``ast``. Import aliases are resolved so that
``from subprocess import run as launch; launch(...)`` still matches
``subprocess.run``. Dynamic dispatch (``getattr(os, "system")``) is out
of static reach and is not resolved.
"""

from __future__ import annotations

import ast
import json
import re
import textwrap
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import FileManifest, SkippedFile, SourceFileRecord
from .sinks import GROUP_BUILTIN, GROUP_SUBPROCESS, SinkCatalog

MODULE_CANDIDATE_NAME = "<module>"

# call_arg_shape values
SHAPE_STRING_LITERAL = "string_literal"
SHAPE_FORMATTED_STRING = "formatted_string"
SHAPE_NAME_REF = "name_ref"
SHAPE_LIST_LITERAL = "list_literal"
SHAPE_OTHER = "other"

# blindspot reasons
REASON_LIST_ARGUMENT = "list_argument"
REASON_EXTERNAL_BINDING = "external_binding"


@dataclass(frozen=True)
class SinkHit:
    sink: str
    line: int
    call_arg_shape: str
    shell_true: bool = False


@dataclass(frozen=True)
class CandidateFunction:
    case_id: str
    project: str
    file: str
    function_name: str
    line_span: tuple[int, int]  # 1-based inclusive
    matched_sinks: tuple[SinkHit, ...]
    source_text: str

    @property
    def loc(self) -> int:
        start, end = self.line_span
        return end - start + 1

    @property
    def is_module_level(self) -> bool:
        return self.function_name == MODULE_CANDIDATE_NAME


@dataclass(frozen=True)
class CandidateSet:
    candidates: tuple[CandidateFunction, ...]
    skipped: tuple[SkippedFile, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.candidates)

    def by_id(self, case_id: str) -> CandidateFunction:
        for c in self.candidates:
            if c.case_id == case_id:
                return c
        raise KeyError(case_id)


def resolve_imports(file_source: str) -> dict[str, str]:
    """Map every import-produced local binding to its qualified origin.

    ``import M`` -> {M: M}; ``import M as A`` -> {A: M};
    ``from M import f`` -> {f: M.f}; ``from M import f as g`` -> {g: M.f}.
    Star and relative imports produce no bindings. Raises SyntaxError for
    unparseable source.
    """
    tree = ast.parse(file_source)
    mapping: dict[str, str] = {}
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for alias in node.names:
                if alias.asname:
                    mapping[alias.asname] = alias.name
                else:
                    # `import os.path` binds only the top-level name
                    mapping[alias.name.split(".")[0]] = alias.name.split(".")[0]
        elif isinstance(node, ast.ImportFrom):
            if node.level or node.module is None:
                continue
            for alias in node.names:
                if alias.name == "*":
                    continue
                local = alias.asname or alias.name
                mapping[local] = f"{node.module}.{alias.name}"
    return mapping


def _dotted_name(func: ast.expr, imports: dict[str, str]) -> str | None:
    if isinstance(func, ast.Name):
        return imports.get(func.id, func.id)
    if isinstance(func, ast.Attribute):
        parts = [func.attr]
        cur = func.value
        while isinstance(cur, ast.Attribute):
            parts.append(cur.attr)
            cur = cur.value
        if isinstance(cur, ast.Name):
            parts.append(imports.get(cur.id, cur.id))
            return ".".join(reversed(parts))
    return None


def _normalize(qualname: str | None) -> str | None:
    if qualname in ("builtins.exec", "builtins.eval"):
        return qualname.split(".", 1)[1]
    return qualname


_COMMAND_KEYWORDS = ("args", "cmd", "command")


def _command_arg(call: ast.Call) -> ast.expr | None:
    if call.args:
        return call.args[0]
    for kw in call.keywords:
        if kw.arg in _COMMAND_KEYWORDS:
            return kw.value
    return None


def _arg_shape(node: ast.expr | None) -> str:
    if node is None:
        return SHAPE_OTHER
    if isinstance(node, ast.Constant) and isinstance(node.value, str):
        return SHAPE_STRING_LITERAL
    if isinstance(node, ast.JoinedStr):
        return SHAPE_FORMATTED_STRING
    if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Mod):
        return SHAPE_FORMATTED_STRING
    if (
        isinstance(node, ast.Call)
        and isinstance(node.func, ast.Attribute)
        and node.func.attr == "format"
    ):
        return SHAPE_FORMATTED_STRING
    if isinstance(node, ast.Name):
        return SHAPE_NAME_REF
    if isinstance(node, ast.List):
        return SHAPE_LIST_LITERAL
    return SHAPE_OTHER


def _make_hit(call: ast.Call, qualname: str, catalog: SinkCatalog) -> SinkHit:
    group = catalog.group_of(qualname)
    shape = _arg_shape(_command_arg(call))
    shell_true = False
    if group == GROUP_SUBPROCESS:
        for kw in call.keywords:
            if kw.arg == "shell":
                if isinstance(kw.value, ast.Constant) and kw.value.value is True:
                    shell_true = True
                elif not isinstance(kw.value, ast.Constant):
                    # computed shell= value: risk unknown
                    shape = SHAPE_OTHER
    if group == GROUP_BUILTIN and shape == SHAPE_LIST_LITERAL:
        # a list makes no sense for eval/exec; keep the invariant that
        # list_literal only appears on argv-style sinks
        shape = SHAPE_OTHER
    return SinkHit(sink=qualname, line=call.lineno, call_arg_shape=shape, shell_true=shell_true)


class _SinkVisitor(ast.NodeVisitor):
    """Attributes each sink call to the innermost enclosing def.

    Decorators, default values, and annotations evaluate in the enclosing
    scope, so they are visited before the function frame is pushed.
    Class bodies do not open a frame.
    """

    def __init__(self, catalog: SinkCatalog, imports: dict[str, str]):
        self.catalog = catalog
        self.imports = imports
        # stack of (function node, hits); module level is index 0 with node=None
        self.frames: list[tuple[ast.AST | None, list[SinkHit]]] = [(None, [])]
        self.functions: list[tuple[ast.AST, list[SinkHit]]] = []

    def _visit_function(self, node: ast.FunctionDef | ast.AsyncFunctionDef) -> None:
        for dec in node.decorator_list:
            self.visit(dec)
        for default in list(node.args.defaults) + [
            d for d in node.args.kw_defaults if d is not None
        ]:
            self.visit(default)
        args = node.args
        for arg in args.posonlyargs + args.args + args.kwonlyargs:
            if arg.annotation is not None:
                self.visit(arg.annotation)
        if node.returns is not None:
            self.visit(node.returns)
        hits: list[SinkHit] = []
        self.frames.append((node, hits))
        for stmt in node.body:
            self.visit(stmt)
        self.frames.pop()
        self.functions.append((node, hits))

    visit_FunctionDef = _visit_function
    visit_AsyncFunctionDef = _visit_function

    def visit_Call(self, node: ast.Call) -> None:
        qualname = _normalize(_dotted_name(node.func, self.imports))
        if qualname and qualname in self.catalog.names:
            self.frames[-1][1].append(_make_hit(node, qualname, self.catalog))
        self.generic_visit(node)


def make_case_id(project: str, file: str, function: str, start_line: int) -> str:
    return f"{project}:{file}:{function}:{start_line}"


def _slice_lines(source: str, start: int, end: int) -> str:
    lines = source.splitlines(keepends=True)
    return "".join(lines[start - 1 : end])


def extract_from_source(
    source: str,
    catalog: SinkCatalog,
    *,
    project: str,
    relative_path: str,
) -> list[CandidateFunction]:
    """Extract candidates from one file's source text.

    Raises SyntaxError when the source does not parse; callers record a
    skip entry.
    """
    imports = resolve_imports(source)
    tree = ast.parse(source)
    visitor = _SinkVisitor(catalog, imports)
    for stmt in tree.body:
        visitor.visit(stmt)

    candidates = []
    for node, hits in visitor.functions:
        if not hits:
            continue
        start, end = node.lineno, node.end_lineno or node.lineno
        candidates.append(
            CandidateFunction(
                case_id=make_case_id(project, relative_path, node.name, start),
                project=project,
                file=relative_path,
                function_name=node.name,
                line_span=(start, end),
                matched_sinks=tuple(sorted(hits, key=lambda h: h.line)),
                source_text=_slice_lines(source, start, end),
            )
        )

    module_hits = visitor.frames[0][1]
    if module_hits:
        n_lines = max(1, len(source.splitlines()))
        candidates.append(
            CandidateFunction(
                case_id=make_case_id(project, relative_path, MODULE_CANDIDATE_NAME, 1),
                project=project,
                file=relative_path,
                function_name=MODULE_CANDIDATE_NAME,
                line_span=(1, n_lines),
                matched_sinks=tuple(sorted(module_hits, key=lambda h: h.line)),
                source_text=source,
            )
        )
    candidates.sort(key=lambda c: (c.line_span[0], c.function_name))
    return candidates


def extract_candidates(
    record: SourceFileRecord,
    catalog: SinkCatalog,
    *,
    root: str | Path,
    project: str,
) -> tuple[list[CandidateFunction], list[SkippedFile]]:
    """Extract candidates for one manifest record; parse failures become
    skip records, never exceptions."""
    path = Path(root) / record.relative_path
    try:
        source = path.read_text("utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        return [], [SkippedFile(record.relative_path, f"unreadable: {exc}")]
    try:
        found = extract_from_source(
            source, catalog, project=project, relative_path=record.relative_path
        )
    except SyntaxError as exc:
        return [], [SkippedFile(record.relative_path, f"syntax error: {exc.msg}")]
    return found, []


def extract_corpus(
    manifest: FileManifest, catalog: SinkCatalog, *, project: str = "project"
) -> CandidateSet:
    """Union of per-file extraction over a manifest, in manifest order."""
    candidates: list[CandidateFunction] = []
    skipped: list[SkippedFile] = list(manifest.skipped)
    for record in manifest.files:
        found, skips = extract_candidates(
            record, catalog, root=manifest.root, project=project
        )
        candidates.extend(found)
        skipped.extend(skips)
    return CandidateSet(tuple(candidates), tuple(skipped))


def reparse_candidate(candidate: CandidateFunction) -> ast.AST:
    """Parse a candidate's source_text (dedented, since slices of nested
    defs keep their original indentation)."""
    return ast.parse(textwrap.dedent(candidate.source_text))


# ---------------------------------------------------------------------------
# blind-spot advisor

_LIST_ANNOTATION = re.compile(r"^(typing\.)?(List|list)\b")


def _is_list_annotation(node: ast.expr | None) -> bool:
    if node is None:
        return False
    if isinstance(node, ast.Subscript):
        node = node.value
    name = _dotted_name(node, {}) if isinstance(node, (ast.Name, ast.Attribute)) else None
    return bool(name and _LIST_ANNOTATION.match(name))


def _function_def(tree: ast.AST, name: str) -> ast.FunctionDef | ast.AsyncFunctionDef | None:
    for node in ast.walk(tree):
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)) and node.name == name:
            return node
    return None


def _param_names(fn: ast.FunctionDef | ast.AsyncFunctionDef) -> set[str]:
    a = fn.args
    params = a.posonlyargs + a.args + a.kwonlyargs
    names = {p.arg for p in params}
    if a.vararg:
        names.add(a.vararg.arg)
    if a.kwarg:
        names.add(a.kwarg.arg)
    return names


def _list_typed_params(fn: ast.FunctionDef | ast.AsyncFunctionDef) -> set[str]:
    a = fn.args
    return {
        p.arg
        for p in a.posonlyargs + a.args + a.kwonlyargs
        if _is_list_annotation(p.annotation)
    }


def _locally_bound_names(scope: ast.AST) -> set[str]:
    bound: set[str] = set()
    for node in ast.walk(scope):
        targets: list[ast.expr] = []
        if isinstance(node, ast.Assign):
            targets = list(node.targets)
        elif isinstance(node, (ast.AnnAssign, ast.AugAssign, ast.For)):
            targets = [node.target]
        elif isinstance(node, ast.withitem) and node.optional_vars is not None:
            targets = [node.optional_vars]
        for t in targets:
            for sub in ast.walk(t):
                if isinstance(sub, ast.Name):
                    bound.add(sub.id)
    return bound


def _call_at_line(tree: ast.AST, sink_tail: str, rel_line: int) -> ast.Call | None:
    for node in ast.walk(tree):
        if isinstance(node, ast.Call) and node.lineno == rel_line:
            name = _dotted_name(node.func, {})
            if name and name.split(".")[-1] == sink_tail.split(".")[-1]:
                return node
    return None


def flag_blindspots(candidate_set: CandidateSet) -> list[tuple[str, str]]:
    """Flag candidates matching the two patterns the model is known to
    under-report: argv-list subprocess calls, and eval/exec of a name
    bound outside the function body (parameter or global)."""
    flags: list[tuple[str, str]] = []
    for cand in candidate_set.candidates:
        try:
            tree = reparse_candidate(cand)
        except SyntaxError:
            continue
        if cand.is_module_level:
            fn = None
            params: set[str] = set()
            list_params: set[str] = set()
        else:
            fn = _function_def(tree, cand.function_name)
            if fn is None:
                continue
            params = _param_names(fn)
            list_params = _list_typed_params(fn)
        scope = fn if fn is not None else tree
        local_names = _locally_bound_names(scope) - params
        start = cand.line_span[0]
        reasons: set[str] = set()
        for hit in cand.matched_sinks:
            rel_line = hit.line - start + 1
            is_eval_exec = hit.sink in ("eval", "exec")
            is_subprocess = hit.sink.startswith("subprocess.")
            if is_subprocess and hit.call_arg_shape == SHAPE_LIST_LITERAL:
                reasons.add(REASON_LIST_ARGUMENT)
                continue
            if hit.call_arg_shape != SHAPE_NAME_REF:
                continue
            call = _call_at_line(tree, hit.sink, rel_line)
            if call is None:
                continue
            arg = _command_arg(call)
            if not isinstance(arg, ast.Name):
                continue
            if is_subprocess and arg.id in list_params:
                reasons.add(REASON_LIST_ARGUMENT)
            elif is_eval_exec and (arg.id in params or arg.id not in local_names):
                reasons.add(REASON_EXTERNAL_BINDING)
        for reason in sorted(reasons):
            flags.append((cand.case_id, reason))
    return flags


# ---------------------------------------------------------------------------
# serialization

def candidate_to_dict(c: CandidateFunction) -> dict:
    return {
        "case_id": c.case_id,
        "project": c.project,
        "file": c.file,
        "function": c.function_name,
        "span": [c.line_span[0], c.line_span[1]],
        "loc": c.loc,
        "sinks": [
            {
                "name": h.sink,
                "line": h.line,
                "arg_shape": h.call_arg_shape,
                "shell_true": h.shell_true,
            }
            for h in c.matched_sinks
        ],
        "source": c.source_text,
    }


def candidate_from_dict(d: dict) -> CandidateFunction:
    return CandidateFunction(
        case_id=d["case_id"],
        project=d["project"],
        file=d["file"],
        function_name=d["function"],
        line_span=(d["span"][0], d["span"][1]),
        matched_sinks=tuple(
            SinkHit(s["name"], s["line"], s["arg_shape"], s["shell_true"])
            for s in d["sinks"]
        ),
        source_text=d["source"],
    )


def write_candidates_jsonl(cset: CandidateSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in cset.candidates:
            fh.write(json.dumps(candidate_to_dict(c), sort_keys=True) + "\n")


def read_candidates_jsonl(path: str | Path) -> CandidateSet:
    candidates = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                candidates.append(candidate_from_dict(json.loads(line)))
    return CandidateSet(tuple(candidates))


def safe_case_filename(case_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", case_id) + ".py"


def write_candidate_files(cset: CandidateSet, out_dir: str | Path) -> list[Path]:
    """Write each candidate to its own source file under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for c in cset.candidates:
        target = out / safe_case_filename(c.case_id)
        target.write_text(c.source_text, encoding="utf-8")
        written.append(target)
    return written
