from __future__ import annotations

import pytest

from ntdceg.fixtures import panel2_model, radicalisation_model
from ntdceg.positions import build_ntdceg


@pytest.fixture(scope="session")
def rad_prefix():
    return radicalisation_model()


@pytest.fixture(scope="session")
def rad(rad_prefix):
    return build_ntdceg(rad_prefix)


@pytest.fixture(scope="session")
def panel2(rad_prefix):
    return build_ntdceg(panel2_model())


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line: call with (number, ok, detail)."""
    lines = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
