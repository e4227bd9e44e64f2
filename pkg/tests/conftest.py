import shutil
from collections import defaultdict

import pytest

_ACCEPTANCE_NAMES = {
    1: "pass@k oracle equivalence",
    2: "published Delta_F arithmetic",
    3: "deterministic end-to-end convergence (mock LLM)",
    4: "testbench immutability",
    5: "budget exhaustion",
    6: "diagnostic extraction on fixtures",
    7: "real-toolchain smoke test",
    8: "rollback policy",
}
_acceptance_outcomes: dict[int, list[str]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): test belongs to acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number = marker.args[0]
    if report.when == "call":
        _acceptance_outcomes[number].append("skipped" if report.skipped else report.outcome)
    elif report.skipped:
        _acceptance_outcomes[number].append("skipped")
    elif report.failed:
        _acceptance_outcomes[number].append("failed")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE_NAMES):
        results = _acceptance_outcomes.get(number)
        if not results:
            continue
        if "failed" in results:
            verdict = "FAIL"
        elif all(r == "skipped" for r in results):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        terminalreporter.write_line(
            f"criterion {number} {verdict}: {_ACCEPTANCE_NAMES[number]} ({len(results)} tests)")


def _verilator_profile():
    for name, binary in (("verilator", "verilator"), ("verilator-pip", "verilator-cli")):
        if shutil.which(binary):
            return name
    return None


@pytest.fixture(scope="session")
def verilator_profile_name():
    name = _verilator_profile()
    if name is None:
        pytest.skip("Verilator is not installed")
    return name
