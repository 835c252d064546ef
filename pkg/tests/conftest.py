import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


# one line per acceptance criterion in the terminal summary
_ACCEPTANCE = {}
_RANK = ("passed", "skipped", "failed")


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        num = int(name.split("_")[2])
        detail = dict(report.user_properties).get("detail", "")
        if report.skipped and isinstance(report.longrepr, tuple):
            detail = report.longrepr[2]
        prev_outcome, prev_detail = _ACCEPTANCE.get(num, ("passed", ""))
        outcome = max(prev_outcome, report.outcome, key=_RANK.index)
        _ACCEPTANCE[num] = (outcome, "; ".join(filter(None, [prev_detail, detail])))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        outcome, detail = _ACCEPTANCE[num]
        tag = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[outcome]
        terminalreporter.write_line(f"criterion {num:2d}: {tag}  {detail}")
