import numpy as np
import pytest

from jpolock.potential import DriveConfig, ResonatorParams


@pytest.fixture
def ref_params():
    # kappa = 4, gamma = -1/12: q* = sqrt(2), barrier 1 at threshold
    return ResonatorParams.scaled()


@pytest.fixture
def ref_drive():
    return DriveConfig(pump_ratio=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    """Store a criterion verdict; printed in the terminal summary."""
    ACCEPTANCE[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
