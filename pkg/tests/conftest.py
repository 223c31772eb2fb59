import pytest

_ACCEPTANCE: dict = {}


@pytest.fixture
def detail(request):
    """Attach a one-line measurement summary to the running acceptance test."""
    def add(text: str):
        request.node.user_properties.append(("detail", text))
    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call":
        return
    number, name = mark.args
    notes = [v for k, v in item.user_properties if k == "detail"]
    text = "; ".join(notes) if notes else str(rep.longrepr).splitlines()[-1] if rep.failed else ""
    _ACCEPTANCE[number] = (name, rep.passed, text, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        name, ok, text, dur = _ACCEPTANCE[number]
        terminalreporter.write_line(
            f"{'PASS' if ok else 'FAIL'} [{number}] {name}: {text} ({dur:.1f}s)")
