import pytest

from feslkit.problems import roof_truss_problem, shear_frame_problem, two_bar_problem

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one summary line per acceptance criterion."""

    def record(number, passed, text):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {text}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES, key=lambda item: item[0]):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def p1():
    return two_bar_problem()


@pytest.fixture(scope="session")
def p2():
    return shear_frame_problem()


@pytest.fixture(scope="session")
def p3():
    return roof_truss_problem()
