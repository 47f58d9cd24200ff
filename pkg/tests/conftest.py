import sys
from pathlib import Path

import pytest

from spreadrank.graph import toy_network
from spreadrank.srd import ScoreMatrix

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def toy():
    return toy_network()


@pytest.fixture(scope="session")
def golden_scores():
    return ScoreMatrix.from_csv((DATA / "golden_scores.csv").read_text())


@pytest.fixture(scope="session")
def golden_ranks():
    return ScoreMatrix.from_csv((DATA / "golden_ranks.csv").read_text())


@pytest.fixture
def worked_example():
    return ScoreMatrix(
        ["Prop1", "Prop2", "Prop3", "Prop4", "Prop5"],
        ["Solution 1", "Solution 2", "Ref"],
        [[0.37, 0.65, 0.49], [0.51, 0.14, 0.34], [0.82, 0.88, 1.0], [0.93, 0.65, 0.84], [0.88, 0.65, 0.84]],
    )


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
