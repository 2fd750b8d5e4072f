from __future__ import annotations

from collections import defaultdict

import pytest

# criterion number -> list of (test id, passed) and free-form detail strings
_OUTCOMES: dict[int, list[tuple[str, bool]]] = defaultdict(list)
_DETAILS: dict[int, list[str]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion the test belongs to")


@pytest.fixture
def detail(request):
    """Attach a one-line measurement to the test's acceptance criterion."""
    marker = request.node.get_closest_marker("criterion")

    def add(text: str) -> None:
        if marker is not None:
            _DETAILS[marker.args[0]].append(text)

    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _OUTCOMES[marker.args[0]].append((item.name, rep.passed))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_OUTCOMES):
        results = _OUTCOMES[n]
        ok = all(passed for _, passed in results)
        failed = [name for name, passed in results if not passed]
        parts = list(_DETAILS.get(n, []))
        if failed:
            parts.append("failed: " + ", ".join(failed))
        line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}"
        if parts:
            line += " | " + "; ".join(parts)
        terminalreporter.write_line(line)
