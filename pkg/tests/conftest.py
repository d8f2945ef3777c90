import random

import pytest

from oblivcrack.core import PasswordSpace
from oblivcrack.provider import LocalProvider, ProviderState
from oblivcrack.tables import TableParams, build_all

# (criterion id, description, passed, detail) appended by test_acceptance
ACCEPTANCE_RESULTS: list[tuple[str, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid, name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {cid} {name}: {detail}")


@pytest.fixture(scope="session")
def space4():
    return PasswordSpace(b"abcdef", 4)


@pytest.fixture(scope="session")
def params4(space4):
    return TableParams.from_alpha(space4, 0.9, 4.0)


@pytest.fixture(scope="session")
def built4(params4):
    tables, stats, per_table = build_all(params4)
    return tables, stats, per_table


@pytest.fixture(scope="session")
def tables4(built4):
    return built4[0]


@pytest.fixture(scope="session")
def state4(tables4, params4):
    return ProviderState(tables4, params4)


@pytest.fixture
def local4(state4):
    return LocalProvider(state4)


@pytest.fixture
def rng():
    return random.Random(20240607)
