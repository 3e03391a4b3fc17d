import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from quantding.model import build_p1_model, build_toric_model
from quantding.polytope import NAMED_POLYTOPES

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def p1(m, resolution=None):
    return build_p1_model(m, resolution or 2 * m + 6)


@functools.lru_cache(maxsize=None)
def toric(name, m, resolution=None):
    return build_toric_model(NAMED_POLYTOPES[name](), m, resolution=resolution)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def measured(request):
    """Dict of measured quantities shown next to the criterion's verdict."""
    store = {}
    request.node._measured = store
    return store


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        num, title = mark.args
        entry = _CRITERIA.setdefault(num, {"title": title, "ok": True, "measured": {}})
        entry["ok"] &= rep.outcome == "passed"
        entry["measured"].update(getattr(item, "_measured", {}))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        e = _CRITERIA[num]
        meas = ", ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in e["measured"].items())
        tr.write_line(f"criterion {num:2d} {'PASS' if e['ok'] else 'FAIL'}  {e['title']}" + (f"  [{meas}]" if meas else ""))
