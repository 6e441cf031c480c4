"""Repository scanning: enumerate files and build a manifest of Python sources.

LOC is the raw newline count (wc -l semantics); blank and comment lines
are not distinguished.
"""

from __future__ import annotations

import fnmatch
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import RootNotFound

PYTHON_EXTENSION = ".py"


@dataclass(frozen=True)
class SourceFileRecord:
    relative_path: str  # POSIX-style, relative to the scan root
    loc: int
    content_digest: str  # sha256 hex of the raw bytes


@dataclass(frozen=True)
class SkippedFile:
    relative_path: str
    reason: str


@dataclass(frozen=True)
class FileManifest:
    root: str
    files: tuple[SourceFileRecord, ...]
    skipped: tuple[SkippedFile, ...] = field(default_factory=tuple)
    total_files: int = 0
    python_files: int = 0
    python_loc: int = 0

    def to_json(self) -> str:
        doc = {
            "root": self.root,
            "files": [
                {"path": r.relative_path, "loc": r.loc, "digest": r.content_digest}
                for r in self.files
            ],
            "skipped": [
                {"path": s.relative_path, "reason": s.reason} for s in self.skipped
            ],
            "totals": {
                "total_files": self.total_files,
                "python_files": self.python_files,
                "python_loc": self.python_loc,
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FileManifest":
        doc = json.loads(text)
        return cls(
            root=doc["root"],
            files=tuple(
                SourceFileRecord(f["path"], f["loc"], f["digest"])
                for f in doc["files"]
            ),
            skipped=tuple(
                SkippedFile(s["path"], s["reason"]) for s in doc.get("skipped", [])
            ),
            total_files=doc["totals"]["total_files"],
            python_files=doc["totals"]["python_files"],
            python_loc=doc["totals"]["python_loc"],
        )


def _count_loc(data: bytes) -> int:
    return data.count(b"\n")


def _matches_any(rel_posix: str, patterns: Sequence[str]) -> bool:
    return any(
        fnmatch.fnmatch(rel_posix, pat) or fnmatch.fnmatch(os.path.basename(rel_posix), pat)
        for pat in patterns
    )


def scan_repo(root: str | Path, ignore_patterns: Iterable[str] = ()) -> FileManifest:
    """Walk ``root`` (symlinks not followed) and build a FileManifest.

    Every regular file contributes to total_files; files with the ``.py``
    extension that do not match any ignore pattern are recorded with LOC
    and a content digest. Per-file read or decode errors become skipped
    entries, never fatal.
    """
    root = Path(root)
    if not root.is_dir():
        raise RootNotFound(f"not a readable directory: {root}")
    patterns = tuple(ignore_patterns)

    records: list[SourceFileRecord] = []
    skipped: list[SkippedFile] = []
    total_files = 0
    python_files = 0

    for dirpath, dirnames, filenames in os.walk(root, followlinks=False):
        dirnames.sort()
        for name in sorted(filenames):
            full = Path(dirpath) / name
            if full.is_symlink() or not full.is_file():
                continue
            rel = full.relative_to(root).as_posix()
            total_files += 1
            if not name.endswith(PYTHON_EXTENSION) or _matches_any(rel, patterns):
                continue
            python_files += 1
            try:
                data = full.read_bytes()
            except OSError as exc:
                skipped.append(SkippedFile(rel, f"read error: {exc}"))
                continue
            try:
                data.decode("utf-8")
            except UnicodeDecodeError:
                skipped.append(SkippedFile(rel, "not valid UTF-8"))
                continue
            records.append(
                SourceFileRecord(
                    relative_path=rel,
                    loc=_count_loc(data),
                    content_digest=hashlib.sha256(data).hexdigest(),
                )
            )

    records.sort(key=lambda r: r.relative_path)
    skipped.sort(key=lambda s: s.relative_path)
    return FileManifest(
        root=str(root),
        files=tuple(records),
        skipped=tuple(skipped),
        total_files=total_files,
        python_files=python_files,
        python_loc=sum(r.loc for r in records),
    )
