import pytest

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_runtest_makereport(item, call):
    criterion = item.get_closest_marker("criterion")
    if criterion is None or call.when != "call":
        return
    number, title = criterion.args
    ok = call.excinfo is None
    detail = getattr(item, "acceptance_detail", "")
    ACCEPTANCE[number] = (ok, f"{title}{': ' + detail if detail else ''}")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): an acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE, key=int):
        ok, text = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {text}")


@pytest.fixture
def detail(request):
    """Attach a measured value to the criterion's summary line."""
    def record(text):
        request.node.acceptance_detail = text
    return record
