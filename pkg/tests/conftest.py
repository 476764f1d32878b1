from importlib import resources

import pytest

from counterabs.protocol import parse_protocol

CORPUS_DIR = resources.files("counterabs") / "corpus"

# one protocol per primitive plus the extra instances
CORPUS = [
    "internal",
    "lossy_demo",
    "disj",
    "sync_demo",
    "gsync",
    "asm",
    "mixed",
    "spurious",
    "rbn",
    "io",
    "cycle",
    "oneshot",
]


def corpus_text(name: str) -> str:
    return (CORPUS_DIR / f"{name}.proto").read_text(encoding="utf-8")


def corpus(name: str):
    return parse_protocol(corpus_text(name))


def corpus_path(filename: str) -> str:
    return str(CORPUS_DIR / filename)


@pytest.fixture
def lossy_demo():
    return corpus("lossy_demo")


@pytest.fixture
def sync_demo():
    return corpus("sync_demo")


@pytest.fixture
def gsync():
    return corpus("gsync")


@pytest.fixture
def asm():
    return corpus("asm")


# one line per acceptance criterion, repeated in the terminal summary so
# the verdicts are visible without -s
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
