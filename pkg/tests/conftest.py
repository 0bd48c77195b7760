import pytest

from gsico import ModelKind, generate_synthetic

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        notes = [v for k, v in item.user_properties if k == "report"]
        _ACCEPTANCE.append((marker.args[0], marker.args[1], rep.outcome, rep.duration, notes))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title, outcome, duration, notes in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        tag = "PASS" if outcome == "passed" else "FAIL"
        tr.write_line(f"[{tag}] criterion {n}: {title} ({duration:.1f}s)")
        for note in notes:
            for line in str(note).splitlines():
                tr.write_line(f"       {line}")


@pytest.fixture(scope="session")
def small_3dgs():
    return generate_synthetic(ModelKind.THREEDGS, 1300, 4, seed=3)


@pytest.fixture(scope="session")
def small_scaffold():
    return generate_synthetic(ModelKind.SCAFFOLD, 1300, 4, seed=4)
