import time

import pytest

from bimeron.sweep import GridPolicy, SweepConfig, run_sweep

SWEEP_SIGMAS = (0.05, 0.1, 0.15, 0.2)

# (criterion number, line) per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[tuple[int, str]] = []
# wall-clock seconds of the shared sweep, filled by the fixture
SWEEP_SECONDS: dict[str, float] = {}


@pytest.fixture(scope="session")
def sweep_report():
    """Default-policy sweep shared by every test that needs converged minimizers.

    Runs once per session (about ten minutes on one laptop core).
    """
    start = time.perf_counter()
    report = run_sweep(SweepConfig(SWEEP_SIGMAS, GridPolicy()))
    SWEEP_SECONDS["total"] = time.perf_counter() - start
    return report


@pytest.fixture(scope="session")
def sweep_rows(sweep_report):
    return {r.sigma: r for r in sweep_report.rows}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
