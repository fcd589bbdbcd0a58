import re

ACCEPT = re.compile(r"test_acceptance\.py::test_c(\d+)_")
_time_spent = {}


def pytest_runtest_logreport(report):
    m = ACCEPT.search(report.nodeid)
    if m:
        num = int(m.group(1))
        _time_spent[num] = _time_spent.get(num, 0.0) + report.duration


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import CRITERIA

    status = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            m = ACCEPT.search(getattr(rep, "nodeid", ""))
            if not m:
                continue
            num = int(m.group(1))
            note = dict(rep.user_properties).get("measured", "")
            if rep.failed:
                status[num] = ("FAIL", note)
            elif rep.when == "call" and status.get(num, ("",))[0] != "FAIL":
                status[num] = ("PASS", note)
    if not status:
        return
    terminalreporter.section("acceptance criteria")
    for num, label in sorted(CRITERIA.items()):
        word, note = status.get(num, ("NOT RUN", ""))
        note = f": {note}" if note else ""
        terminalreporter.write_line(f"criterion {num:2d}  {word:7s}  {label}{note} "
                                    f"({_time_spent.get(num, 0.0):.1f} s incl. fixtures)")
