import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    report = getattr(mod, "REPORT", None)
    if not report:
        return
    terminalreporter.section("acceptance criteria")
    for item in sorted(report):
        ok, detail = report[item]
        terminalreporter.write_line(f"criterion {item:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
