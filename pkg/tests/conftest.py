from __future__ import annotations

import time
from contextlib import contextmanager
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

# (criterion, description, seconds, limit, outcome) rows for the summary
_ACCEPTANCE: list[tuple[int, str, float, float, str]] = []


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def criterion():
    """Time a criterion body and check it against its runtime limit."""

    @contextmanager
    def run(number: int, description: str, limit: float):
        start = time.perf_counter()
        outcome = "FAIL"
        try:
            yield
            outcome = "PASS"
        finally:
            elapsed = time.perf_counter() - start
            if outcome == "PASS" and elapsed >= limit:
                outcome = "FAIL (slow)"
            _ACCEPTANCE.append((number, description, elapsed, limit, outcome))
        assert elapsed < limit, f"criterion {number} took {elapsed:.2f}s, limit {limit}s"

    return run


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, desc, elapsed, limit, outcome in sorted(_ACCEPTANCE):
        terminalreporter.write_line(
            f"criterion {number}: {outcome:<11} {elapsed:7.3f}s (limit {limit:g}s)  {desc}"
        )
