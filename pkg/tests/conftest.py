import sys

import numpy as np
import pytest
from hypothesis import strategies as st

from exponentlab.scenario import FiniteSource, GaussianSource, LossSpec, Policy
from exponentlab.study import three_expert_scenario


@pytest.fixture(scope="session")
def study():
    return three_expert_scenario()


@pytest.fixture(scope="session")
def study_models(study):
    return study.models(0)


@pytest.fixture
def binary_source():
    return GaussianSource("b", [0.0, 1.0], 1.0)


def symmetric_finite(eps: float, sid: str = "f", M: int = 3) -> FiniteSource:
    p = np.full((M, M), eps / (M - 1))
    np.fill_diagonal(p, 1 - eps)
    return FiniteSource(sid, p)


@st.composite
def gaussian_sources(draw, M=3, n=2, mean_range=2.0):
    out = []
    for g in range(n):
        means = draw(st.lists(st.floats(-mean_range, mean_range), min_size=M, max_size=M, unique=True))
        sigma = draw(st.floats(0.5, 3.0))
        out.append(GaussianSource(f"g{g}", means, sigma**2))
    return tuple(out)


@st.composite
def finite_sources(draw, M=3, S=4, n=1):
    out = []
    for g in range(n):
        raw = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=M * S, max_size=M * S))).reshape(M, S)
        out.append(FiniteSource(f"f{g}", raw / raw.sum(axis=1, keepdims=True)))
    return tuple(out)


@st.composite
def policies(draw, models):
    w = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=len(models), max_size=len(models))))
    if w.sum() < 1e-3:
        w = np.ones(len(models))
    return Policy.normalized(models, w)


@st.composite
def row_rate_losses(draw, M=3, high=0.3):
    c = np.array(draw(st.lists(st.floats(0.0, high), min_size=M, max_size=M)))
    c -= c.min()
    return LossSpec.from_rates(c)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
