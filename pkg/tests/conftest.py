import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS = "_criterion_results"


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, name): acceptance criterion checked by the test")
    setattr(config, _RESULTS, {})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (report.when == "call" or report.failed):
        return
    number, name = marker.args
    details = [v for k, v in item.user_properties if k == "detail"]
    if report.failed and not details:
        details = [str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"]
    getattr(item.config, _RESULTS).setdefault((number, name), []).append((report.passed, details))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, _RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for (number, name), runs in sorted(results.items()):
        ok = all(passed for passed, _ in runs)
        detail = "; ".join(d for _, ds in runs for d in ds)
        line = f"criterion {number} [{name}]: {'PASS' if ok else 'FAIL'}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
