import re

_AC = re.compile(r"test_acceptance\.py::test_ac(\d+)_")


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, in criterion order."""
    rows = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = _AC.search(getattr(rep, "nodeid", ""))
            if m is None or (outcome == "passed" and rep.when != "call"):
                continue
            k = int(m.group(1))
            name = rep.nodeid.split("::")[-1].split("[")[0]
            ok = outcome == "passed" and rows.get(k, (name, True))[1]
            rows[k] = (name, ok)
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(rows):
        name, ok = rows[k]
        terminalreporter.write_line(f"AC{k:<3d}{'PASS' if ok else 'FAIL'}  {name}")
