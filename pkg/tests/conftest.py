import functools
import time

import pytest

from viscowell import runner
from viscowell.config import build_experiment
from viscowell.presets import get_preset

ACCEPTANCE_LINES: list[str] = []
RUN_SECONDS: dict[str, float] = {}


@functools.lru_cache(maxsize=None)
def experiment(name: str):
    return build_experiment(get_preset(name), name)


@functools.lru_cache(maxsize=None)
def preset_run(name: str):
    """``(summary, trace, final_state)`` for a preset, computed once per session."""
    t0 = time.perf_counter()
    out = runner.simulate_experiment(experiment(name))
    RUN_SECONDS[name] = time.perf_counter() - t0
    return out


@pytest.fixture
def record():
    """Record and print one PASS/FAIL line, then assert."""

    def _record(number: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
