import pytest

from kitenav.dynamics import FigureEightConfig, ModelParams, pose_trajectory, simulate
from kitenav.harness import ScenarioConfig, run_scenario

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def figure_eight_history(params):
    return simulate(params, FigureEightConfig(), 600.0, steer_start=10.0)


@pytest.fixture(scope="session")
def figure_eight_pose(figure_eight_history, params):
    return pose_trajectory(figure_eight_history, params)


@pytest.fixture(scope="session")
def zero_error_run():
    return run_scenario(ScenarioConfig(duration=600.0))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
