import numpy as np
import pytest

from lp_tournament.model import HypothesisClass, TabularSpace, Triplet


@pytest.fixture
def three_atom():
    """A 3-atom space, a 3-member class and a target, all hand-enumerable."""
    sp = TabularSpace(np.array([0.2, 0.3, 0.5]))
    H = HypothesisClass.tabular(sp, [[0.0, 1.0, -1.0], [1.0, 1.0, 1.0], [0.5, 0.0, 0.0]],
                                ["a", "b", "c"])
    y = sp.function([0.2, 0.8, -0.4], "y")
    return Triplet(H, y)


ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): one acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call":
        return
    n, title = mark.args
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    line = f"criterion {n} {'PASS' if rep.passed else 'FAIL'}: {title}"
    if detail:
        line += f" [{detail}]"
    ACCEPTANCE.append((n, line))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
