import time

import pytest

_RESULTS = {}


class Criterion:
    """Times one acceptance criterion and records a pass/fail line for it."""

    def __init__(self, key, title):
        self.key, self.title = key, title
        self.detail = ""
        self.start = time.perf_counter()
        self.shared = 0.0  # time spent in shared fixtures on this criterion's behalf

    def elapsed(self):
        return time.perf_counter() - self.start + self.shared


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    c = Criterion(*marker.args)
    yield c
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {c.key}: {c.title} ({c.elapsed():.2f}s){' ' + c.detail if c.detail else ''}"
    _RESULTS[c.key] = line
    print("\n" + line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_RESULTS, key=int):
            terminalreporter.write_line(_RESULTS[key])
