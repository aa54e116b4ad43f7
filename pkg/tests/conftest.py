import numpy as np
import pytest

from ellipse_fusion.gls import Estimate
from ellipse_fusion.joint import random_spd

GOLDEN_K1 = (np.array([[1.0]]), np.array([[4.0]]))
GOLDEN_K2 = (np.diag([1.0, 4.0]), np.diag([3.0, 2.0]))


def spd(rng, k, spread=1.5):
    return random_spd(rng, k, spread)


def ensemble(rng, n, k, spread=1.5):
    return [Estimate(rng.standard_normal(k), spd(rng, k, spread)) for _ in range(n)]


def rel_fro(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-300)


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


# One PASS/FAIL line per acceptance criterion, printed after the run.
_criteria: dict[str, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if not item.name.startswith("test_criterion_"):
        return
    doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _criteria[item.name] = ("PASS" if rep.passed else "FAIL", doc)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        status, doc = _criteria[name]
        number = int(name.split("_")[2])
        case = name.partition("[")[2].rstrip("]")
        label = f"criterion {number:2d}" + (f" [{case}]" if case else "")
        terminalreporter.write_line(f"{status} {label}: {doc}")
