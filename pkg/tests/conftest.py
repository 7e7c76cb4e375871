import numpy as np
import pytest

from lfsda.model import AgentParams, NetworkParams

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def plain_agent(T, **kw):
    """Agent without PV or battery unless overridden."""
    base = dict(l_minus_max=np.zeros(T), s_max=0.0, b_plus_max=0.0, b_minus_max=0.0)
    base.update(kw)
    return AgentParams(**base)


def network(T, **kw):
    return NetworkParams.uniform(T, **kw)
