import os

import pytest

from gridcascade import builtin_five_node

ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, passed: bool, detail: str = "", status: str | None = None) -> None:
    status = status or ("PASS" if passed else "FAIL")
    ACCEPTANCE_LINES.append(f"[{status}] {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def five():
    return builtin_five_node()


@pytest.fixture(scope="session")
def ieee118():
    from gridcascade import builtin_ieee118

    return builtin_ieee118()


@pytest.fixture(scope="session")
def italy():
    path = os.environ.get("GRIDCASCADE_ITALY380")
    if not path:
        pytest.skip("set GRIDCASCADE_ITALY380 to a native grid file of the Italian 380 kV network")
    from gridcascade import load_case

    return load_case(path)
