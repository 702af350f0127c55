import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ragmux.corpus import load_corpus_dir
from ragmux.embeddings import HashEmbedder
from ragmux.orchestrator import EpisodeRunner
from ragmux.retrieval import RetrievalEngine

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS_DIR = FIXTURES / "corpus"
EMBED_DIM = 8
EMBED_SEED = 13


@pytest.fixture(scope="session")
def store():
    return load_corpus_dir(CORPUS_DIR)


@pytest.fixture(scope="session")
def embedder():
    return HashEmbedder(dim=EMBED_DIM, seed=EMBED_SEED)


@pytest.fixture()
def engine(store, embedder):
    return RetrievalEngine(store, embedder)


@pytest.fixture()
def runner(engine):
    return EpisodeRunner(engine)


def write_jsonl(path, records):
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
    return path


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for status, label in (("passed", "PASS"), ("failed", "FAIL"),
                          ("error", "FAIL"), ("skipped", "SKIP")):
        for rep in terminalreporter.stats.get(status, []):
            if "test_acceptance.py" in rep.nodeid and getattr(rep, "when", "call") == "call":
                lines.append((rep.nodeid.split("::")[-1], label))
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, label in sorted(lines):
            terminalreporter.write_line(f"{label}  {name}")
