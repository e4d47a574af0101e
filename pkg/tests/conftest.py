import pytest

from besovcap.filling import build_graph, build_nets
from besovcap.space import make_space
from besovcap.uniformize import UniformParams, uniformize


@pytest.fixture(scope="session")
def interval6():
    return make_space("interval", 6)


@pytest.fixture(scope="session")
def filled6(interval6):
    """interval(6) with its filling, uniformized at p = 2, theta = 1/2."""
    g = build_graph(build_nets(interval6, 2.0), 1.5)
    return uniformize(g, UniformParams.from_theta(2.0, 2.0, 0.5))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
