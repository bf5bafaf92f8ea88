import pytest

from implement_guidance.controllers import ControllerGains
from implement_guidance.geometry import ToolOffset
from implement_guidance.kinematics import VehicleParams
from implement_guidance.path import build_path, field_course_segments
from implement_guidance.simulator import Scenario, initial_pose_for_tool_error

FIELD_OFFSET = ToolOffset(-2.5, -0.5)


@pytest.fixture(scope="session")
def params():
    return VehicleParams()


@pytest.fixture(scope="session")
def gains():
    return ControllerGains(0.21, 0.63)


@pytest.fixture(scope="session")
def course(params):
    return build_path(field_course_segments(), c_max=params.c_max)


@pytest.fixture(scope="session")
def course_scenario(course, params, gains):
    initial = initial_pose_for_tool_error(course, FIELD_OFFSET, 1.0)
    return Scenario(course, params, gains, FIELD_OFFSET, "backstepping", initial)


_CRITERIA_LINES: list[str] = []


@pytest.fixture
def report_criterion():
    def _report(number: int, ok: bool, detail: str) -> None:
        _CRITERIA_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail}")

    return _report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA_LINES, key=lambda l: int(l.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
