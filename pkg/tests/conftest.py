import pytest

CRITERIA = {
    1: "gradient fidelity",
    2: "forward-process moments",
    3: "classifier algebra",
    4: "shared-draw contract",
    5: "end-to-end identification",
    6: "trend reproduction",
    7: "Monte-Carlo stability",
    8: "determinism",
    9: "feature extractor laws",
}

_verdicts: dict = {}


@pytest.fixture
def verdict():
    """``verdict(n, ok, detail)`` records criterion ``n`` and asserts it."""
    def record(n, ok, detail=""):
        _verdicts[n] = (bool(ok), detail)
        assert ok, f"criterion {n} ({CRITERIA[n]}): {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not any(item for item in terminalreporter.stats.get("passed", []) + terminalreporter.stats.get("failed", [])
               if "test_acceptance" in item.nodeid):
        return
    terminalreporter.section("acceptance criteria")
    for n, name in CRITERIA.items():
        if n in _verdicts:
            ok, detail = _verdicts[n]
            terminalreporter.write_line(f"criterion {n} {name}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n} {name}: FAIL  (did not complete)")
