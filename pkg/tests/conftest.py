def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", None) != "call":
                continue
            for name, value in rep.user_properties:
                if name == "criterion":
                    number, detail = value
                    lines.append((number, f"criterion {number:2d} {'PASS' if outcome == 'passed' else 'FAIL'}: {detail}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
