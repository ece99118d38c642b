import pytest

from mcast_testgen.fotg import Tables
from mcast_testgen.gfsm import Engine, GlobalState
from mcast_testgen.pimdm import load_pim_dm


@pytest.fixture(scope="session")
def model():
    return load_pim_dm()


@pytest.fixture(scope="session")
def engine(model):
    return Engine(model)


@pytest.fixture(scope="session")
def tables(engine):
    return Tables(engine)


@pytest.fixture(scope="session")
def crash_engine():
    return Engine(load_pim_dm(crash=True))


def G(*symbols):
    return GlobalState(tuple(symbols))


def key(*symbols):
    return G(*symbols).key


def index_of(g, symbol):
    return g.routers.index(symbol)


# criterion number -> (passed, title, detail); filled by test_acceptance
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[k]
        line = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))


@pytest.fixture
def detail():
    """Scratch dict a criterion test fills with a short note for the summary."""
    return {}
