import pytest

_RESULTS: dict[str, tuple[bool, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(cid): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    measured = dict(item.user_properties).get("measured", "")
    if rep.failed and not measured:
        measured = str(call.excinfo.value).splitlines()[0] if call.excinfo else ""
    _RESULTS[marker.args[0]] = (rep.passed, measured)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_RESULTS, key=lambda c: int(c[2:])):
        ok, measured = _RESULTS[cid]
        terminalreporter.write_line(f"{cid:<5} {'PASS' if ok else 'FAIL'}  {measured}")
