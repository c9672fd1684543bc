import copy

import numpy as np
import pytest

from pmu_gsa.feeder import build_feeder, load_feeder
from pmu_gsa.measurement import NoiseSpec, make_placement
from pmu_gsa.powerflow import solve

SIX_PMU_PLACEMENT = [800, 816, 820, 836, 854, 858]

TOY_DOC = {
    "name": "toy",
    "base_kv": 4.16,
    "base_kva": 3000,
    "slack": 1,
    "line_configs": {
        "abc": {"r": [[0.4, 0.1, 0.1], [0.1, 0.4, 0.1], [0.1, 0.1, 0.4]],
                "x": [[1.0, 0.4, 0.35], [0.4, 1.0, 0.38], [0.35, 0.38, 1.0]]},
        "a": {"r": [[1.3, 0, 0], [0, 0, 0], [0, 0, 0]], "x": [[1.35, 0, 0], [0, 0, 0], [0, 0, 0]]},
    },
    "branches": [
        {"from": 1, "to": 2, "length_ft": 2000, "config": "abc", "phases": "abc"},
        {"from": 2, "to": 3, "length_ft": 1500, "config": "abc", "phases": "abc"},
        {"from": 2, "to": 4, "length_ft": 800, "config": "a", "phases": "a"},
        {"from": 3, "to": 5, "length_ft": 1000, "config": "abc", "phases": "abc"},
    ],
    "loads": [
        {"bus": 3, "phase": "a", "kw": 120, "kvar": 60, "kind": "load"},
        {"bus": 3, "phase": "b", "kw": 90, "kvar": 40, "kind": "load"},
        {"bus": 4, "phase": "a", "kw": 50, "kvar": 20, "kind": "load"},
        {"bus": 5, "phase": "b", "kw": 70, "kvar": 30, "kind": "load"},
        {"bus": 5, "phase": "c", "kw": 110, "kvar": 50, "kind": "load"},
    ],
}


@pytest.fixture
def toy_doc():
    return copy.deepcopy(TOY_DOC)


@pytest.fixture(scope="session")
def toy_model():
    return build_feeder(copy.deepcopy(TOY_DOC))


@pytest.fixture(scope="session")
def toy_truth(toy_model):
    return solve(toy_model)


@pytest.fixture(scope="session")
def toy_placement(toy_model):
    return make_placement(toy_model, [1, 3])


@pytest.fixture(scope="session")
def ieee34():
    return load_feeder("ieee34")


@pytest.fixture(scope="session")
def ieee34_truth(ieee34):
    return solve(ieee34)


@pytest.fixture(scope="session")
def placement34(ieee34):
    return make_placement(ieee34, SIX_PMU_PLACEMENT)


@pytest.fixture(scope="session")
def noise():
    return NoiseSpec()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
