import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

from fleetplan.io import load_scenario  # noqa: E402

# criterion number -> (passed, detail); filled in by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def fig3():
    return load_scenario("fig3")


@pytest.fixture(scope="session")
def warehouse():
    return load_scenario("warehouse-swap")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def fig3_plan(fig3):
    from fleetplan.tapf import plan_cbm
    return plan_cbm(fig3.instance)


# property tests draw the same examples on every run
settings.register_profile("repo", derandomize=True, database=None, deadline=None)
settings.load_profile("repo")
