import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(verdicts):
        clauses = verdicts[crit]
        ok = all(c[1] for c in clauses)
        detail = "; ".join(f"{name}: {'ok' if good else 'FAIL'} ({info})" for name, good, info in clauses)
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'} -- {detail}")
