import os
from pathlib import Path

import numpy as np
import pytest

from bincp.kg import build_graph
from bincp.synthetic import block_graph

REPO = Path(__file__).resolve().parent.parent

ACCEPTANCE_LINES: list[str] = []
BENCH_SWEEP: list[str] = []


def wn18rr_dir() -> Path:
    return Path(os.environ.get("BINCP_WN18RR_DIR", REPO / "data" / "WN18RR"))


def have_wn18rr() -> bool:
    d = wn18rr_dir()
    return all((d / f"{s}.txt").is_file() for s in ("train", "valid", "test"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
    if BENCH_SWEEP:
        terminalreporter.section("score throughput sweep (ns per score)")
        for line in BENCH_SWEEP:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def block_splits():
    return block_graph(seed=7)


@pytest.fixture(scope="session")
def block_kg(block_splits):
    return build_graph(block_splits["train"], block_splits["valid"], block_splits["test"])


@pytest.fixture
def toy_kg():
    train = [("a", "likes", "b"), ("b", "likes", "c"), ("a", "knows", "c")]
    valid = [("c", "likes", "a")]
    test = [("b", "knows", "a")]
    return build_graph(train, valid, test)
