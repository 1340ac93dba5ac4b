import math

import pytest
from hypothesis import HealthCheck, settings

from brwlab import model as models

settings.register_profile("brwlab", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("brwlab")

# closed-form constants shared by several test modules
P_B = 0.96
X_B = (1 - math.sqrt(1 - 16 * P_B * (1 - P_B))) / (4 * (1 - P_B))
TSTAR_A = math.log(2 + math.sqrt(3))
TSTAR_B = math.log(X_B)
UP_B = 2 * P_B / X_B


@pytest.fixture(scope="session")
def model_a():
    return models.model_a()


@pytest.fixture(scope="session")
def model_b():
    return models.model_b()


@pytest.fixture(scope="session")
def det():
    return models.deterministic_binary()


@pytest.fixture(scope="session")
def gw_quarter():
    return models.quarter_extinction()


@pytest.fixture(scope="session")
def law_a(model_a):
    return models.spine_law(model_a)


@pytest.fixture(scope="session")
def law_b(model_b):
    return models.spine_law(model_b)


# PASS/FAIL lines from the acceptance suite, echoed in the terminal summary
RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
