import sys

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("default")


@pytest.fixture(scope="session")
def cosine_m2():
    from hohomog import cellproblem, coeffs

    A = coeffs.sample("cosine_1d", 256, m=2)
    return A, cellproblem.solve_all(A)


@pytest.fixture(scope="session")
def cosine_m1():
    from hohomog import cellproblem, coeffs

    A = coeffs.sample("cosine_1d", 256, m=1)
    return A, cellproblem.solve_all(A)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip("."))):
            terminalreporter.write_line(line)
