import os
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from sinktriage.corpus import FileManifest, scan_repo
from sinktriage.errors import RootNotFound

from conftest import MINIPROJ


def test_three_file_tree(tmp_path):
    (tmp_path / "a.py").write_text("x = 1\n")
    (tmp_path / "b.txt").write_text("not python\n")
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "c.py").write_text("y = 2\n")
    m = scan_repo(tmp_path)
    assert m.total_files == 3
    assert m.python_files == 2
    assert [r.relative_path for r in m.files] == ["a.py", "sub/c.py"]


def test_empty_directory(tmp_path):
    m = scan_repo(tmp_path)
    assert m.total_files == 0
    assert m.python_files == 0
    assert m.python_loc == 0


def test_missing_root():
    with pytest.raises(RootNotFound):
        scan_repo("/nonexistent/path/for/sure")


def _walk_oracle(root: Path):
    """Independent directory-walk oracle: recursive scandir plus a
    wc -l style newline count."""
    total = 0
    python = []

    def recurse(d: Path):
        nonlocal total
        for entry in sorted(os.scandir(d), key=lambda e: e.name):
            if entry.is_symlink():
                continue
            if entry.is_dir(follow_symlinks=False):
                recurse(Path(entry.path))
            elif entry.is_file(follow_symlinks=False):
                total += 1
                if entry.name.endswith(".py"):
                    python.append(Path(entry.path))

    recurse(root)
    loc = sum(p.read_bytes().count(b"\n") for p in python)
    return total, len(python), loc


def test_fixture_corpus_matches_walk_oracle(miniproj_manifest):
    total, python, loc = _walk_oracle(MINIPROJ)
    assert miniproj_manifest.total_files == total
    assert miniproj_manifest.python_files == python
    assert miniproj_manifest.python_loc == loc
    assert python == 12


def test_python_loc_is_sum_of_per_file_counts(miniproj_manifest):
    assert miniproj_manifest.python_loc == sum(r.loc for r in miniproj_manifest.files)
    assert miniproj_manifest.python_files <= miniproj_manifest.total_files


def test_scan_is_idempotent(miniproj_manifest):
    again = scan_repo(MINIPROJ)
    assert again == miniproj_manifest


@given(
    st.lists(
        st.sampled_from(["*.py", "sub/*", "clean.py", "*eval*", "nomatch-*"]),
        max_size=4,
    )
)
def test_ignore_patterns_only_shrink(patterns):
    base = scan_repo(MINIPROJ)
    filtered = scan_repo(MINIPROJ, patterns)
    assert filtered.python_files <= base.python_files
    assert filtered.total_files == base.total_files


def test_symlinks_not_followed(tmp_path):
    (tmp_path / "real").mkdir()
    (tmp_path / "real" / "a.py").write_text("pass\n")
    os.symlink(tmp_path / "real", tmp_path / "loop")
    m = scan_repo(tmp_path)
    assert m.python_files == 1


def test_undecodable_python_file_is_skipped(tmp_path):
    (tmp_path / "good.py").write_text("x = 1\n")
    (tmp_path / "bad.py").write_bytes(b"x = '\xff\xfe'\n")
    m = scan_repo(tmp_path)
    assert m.python_files == 2  # extension still counts
    assert [r.relative_path for r in m.files] == ["good.py"]
    assert [s.relative_path for s in m.skipped] == ["bad.py"]
    assert "UTF-8" in m.skipped[0].reason


def test_digest_stable_for_identical_bytes(tmp_path):
    (tmp_path / "a.py").write_text("x = 1\n")
    (tmp_path / "b.py").write_text("x = 1\n")
    m = scan_repo(tmp_path)
    assert m.files[0].content_digest == m.files[1].content_digest


def test_manifest_json_round_trip(miniproj_manifest):
    text = miniproj_manifest.to_json()
    assert FileManifest.from_json(text) == miniproj_manifest
