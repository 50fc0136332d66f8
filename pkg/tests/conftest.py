import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def positive_grids(min_side=1, max_side=6, min_value=0.0):
    """Strategy for non-negative 2-D arrays with some mass."""
    shapes = st.tuples(st.integers(min_side, max_side), st.integers(min_side, max_side))
    values = st.floats(min_value, 10.0, allow_nan=False, allow_infinity=False)
    return shapes.flatmap(lambda s: arrays(np.float64, s, elements=values)).filter(lambda a: a.sum() > 1e-6)


def prob_grids(**kwargs):
    return positive_grids(**kwargs).map(lambda a: a / a.sum())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""

    def record(number, passed, detail):
        _ACCEPTANCE_LINES.append((number, f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
