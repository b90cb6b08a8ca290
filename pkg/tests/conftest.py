import pytest
from hypothesis import settings

# The first call into a numba kernel compiles it, which blows any per-example deadline.
settings.register_profile("spsl", deadline=None)
settings.load_profile("spsl")

_criteria: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        number = marker.args[0]
        title = marker.kwargs.get("title", item.name)
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        _criteria[number] = ("PASS" if report.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status, title, detail = _criteria[number]
        line = f"criterion {number:2d} {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
