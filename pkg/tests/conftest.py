import json
import textwrap
from pathlib import Path

import pytest

from sinktriage.corpus import scan_repo
from sinktriage.extract import extract_corpus
from sinktriage.sinks import default_catalog

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = Path(__file__).resolve().parent / "fixtures"
GOLDENS = Path(__file__).resolve().parent / "goldens"
MINIPROJ = FIXTURES / "miniproj"
CASSETTE = FIXTURES / "cassettes" / "miniproj.json"
LABELS = FIXTURES / "miniproj_labels.jsonl"


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture(scope="session")
def miniproj_manifest():
    return scan_repo(MINIPROJ)


@pytest.fixture(scope="session")
def miniproj_candidates(miniproj_manifest, catalog):
    return extract_corpus(miniproj_manifest, catalog, project="miniproj")


def write_json_shim(path: Path, record: dict) -> Path:
    """A runner double that prints one fixed JSON record."""
    path.write_text(
        textwrap.dedent(
            f"""\
            import json, sys
            print(json.dumps({record!r}))
            """
        ),
        "utf-8",
    )
    return path


def write_replay_shim(path: Path, records: dict[str, dict]) -> Path:
    """A stub shim that replays canned records keyed by
    "<case-dir>/<round-dir>" of the workdir it is invoked in."""
    payload = json.dumps(records, indent=2).replace("\\", "\\\\").replace('"""', r"\"\"\"")
    path.write_text(
        "import json\n"
        "import pathlib\n"
        "import sys\n"
        "\n"
        f'RECORDS = json.loads("""{payload}""")\n'
        "\n"
        "cwd = pathlib.Path.cwd()\n"
        'key = f"{cwd.parent.name}/{cwd.name}"\n'
        "record = RECORDS.get(key)\n"
        "if record is None:\n"
        "    sys.exit(3)\n"
        "print(json.dumps(record))\n",
        "utf-8",
    )
    return path
