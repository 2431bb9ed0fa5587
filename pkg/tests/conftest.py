import numpy as np
import pytest
from hypothesis import settings

import rspot.cli
import rspot.distances
import rspot.solver
from rspot.extended import MarginSpec, build_extended

from oracles import dag7_graph

# Fixed example streams keep the suite-wide aggregates below reproducible.
settings.register_profile("repro", derandomize=True)
settings.load_profile("repro")

# Every solution produced anywhere in the session, for the suite-wide checks.
SOLVES = []

_real_solve = rspot.solver.solve_margins


def _recording_solve(ext, cfg):
    sol = _real_solve(ext, cfg)
    SOLVES.append(sol)
    return sol


@pytest.fixture(autouse=True)
def _record_solves(monkeypatch):
    for mod in (rspot.solver, rspot.distances, rspot.cli):
        monkeypatch.setattr(mod, "solve_margins", _recording_solve)


def pytest_collection_modifyitems(items):
    # the acceptance module aggregates over every other solve, so it runs last
    items.sort(key=lambda it: it.module.__name__.endswith("test_acceptance"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def dag7():
    return dag7_graph()


@pytest.fixture
def dag7_margins(dag7):
    return MarginSpec.from_labels(dag7, {2: 0.5, 3: 0.5}, {7: 0.5, 8: 0.5})


@pytest.fixture
def dag7_ext(dag7, dag7_margins):
    w = (dag7_margins.sigma_out > 0).astype(float)
    return build_extended(dag7, dag7_margins, "user_weights", weights=w)
