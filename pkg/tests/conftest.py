from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def gaussian(center, sigma):
    def f(x):
        return np.exp(-((x - center) ** 2) / (2 * sigma**2)) / np.sqrt(2 * np.pi * sigma**2)

    return f


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_LINES = pytest.StashKey[list]()


@pytest.fixture
def criterion_line(request):
    """``emit(n, ok, detail)`` prints one pass/fail line and keeps it for the summary."""
    lines = request.config.stash.setdefault(_LINES, [])

    def emit(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((n, line))
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda x: x[0]):
            terminalreporter.write_line(line)
