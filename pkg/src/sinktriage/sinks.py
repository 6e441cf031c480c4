"""Catalog of Python call sites that can execute OS commands or code.

26 entries: the two dynamic-evaluation builtins, four subprocess entry
points, and the twenty os-module spawn/exec/shell functions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import CatalogParseError, DuplicateEntry, EmptyCatalog

GROUP_BUILTIN = "builtin"
GROUP_SUBPROCESS = "subprocess"
GROUP_OS = "os"

_BUILTIN_SINKS = ("exec", "eval")
_SUBPROCESS_SINKS = (
    "subprocess.call",
    "subprocess.run",
    "subprocess.Popen",
    "subprocess.check_output",
)
_OS_SINKS = (
    "os.popen",
    "os.system",
    "os.spawnl",
    "os.spawnle",
    "os.spawnlp",
    "os.spawnlpe",
    "os.spawnv",
    "os.spawnve",
    "os.spawnvp",
    "os.spawnvpe",
    "os.posix_spawn",
    "os.posix_spawnp",
    "os.execl",
    "os.execle",
    "os.execlp",
    "os.execlpe",
    "os.execv",
    "os.execve",
    "os.execvp",
    "os.execvpe",
)


@dataclass(frozen=True)
class SinkEntry:
    group: str  # builtin | subprocess | os
    qualified_name: str


@dataclass(frozen=True)
class SinkCatalog:
    entries: tuple[SinkEntry, ...]

    def __post_init__(self) -> None:
        if not self.entries:
            raise EmptyCatalog("catalog has no entries")
        names = [e.qualified_name for e in self.entries]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise DuplicateEntry(f"duplicate catalog entries: {sorted(dupes)}")

    @property
    def names(self) -> frozenset[str]:
        return frozenset(e.qualified_name for e in self.entries)

    def group_of(self, qualified_name: str) -> str | None:
        for e in self.entries:
            if e.qualified_name == qualified_name:
                return e.group
        return None

    def group_sizes(self) -> dict[str, int]:
        sizes: dict[str, int] = {}
        for e in self.entries:
            sizes[e.group] = sizes.get(e.group, 0) + 1
        return sizes


def default_catalog() -> SinkCatalog:
    entries = (
        tuple(SinkEntry(GROUP_BUILTIN, n) for n in _BUILTIN_SINKS)
        + tuple(SinkEntry(GROUP_SUBPROCESS, n) for n in _SUBPROCESS_SINKS)
        + tuple(SinkEntry(GROUP_OS, n) for n in _OS_SINKS)
    )
    return SinkCatalog(entries)


def load_sink_catalog(source: str | Path | None = None) -> SinkCatalog:
    """Load a sink catalog.

    With no source the built-in 26-entry catalog is returned. A custom
    catalog is a JSON array of {"group": str, "name": str}; it may be any
    size but must be non-empty with unique names.
    """
    if source is None:
        return default_catalog()
    path = Path(source)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CatalogParseError(f"cannot read catalog {path}: {exc}") from exc
    if not isinstance(doc, list):
        raise CatalogParseError("catalog must be a JSON array of entries")
    entries = []
    for item in doc:
        try:
            entries.append(SinkEntry(group=item["group"], qualified_name=item["name"]))
        except (TypeError, KeyError) as exc:
            raise CatalogParseError(f"bad catalog entry {item!r}") from exc
    return SinkCatalog(tuple(entries))
