import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

SEEDS = (0, 1, 2)

# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    return ACCEPTANCE


@pytest.fixture(scope="session")
def shapes_runs():
    from desk import desk_run
    from oolib.env import Variant
    return [desk_run(Variant.SHAPES, s) for s in SEEDS]


@pytest.fixture(scope="session")
def rush_hour_runs():
    from desk import desk_run
    from oolib.env import Variant
    return [desk_run(Variant.RUSHHOUR, s, kinds=("howm", "sigma_k_nobind")) for s in SEEDS]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
