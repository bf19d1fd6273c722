import functools
import time

import numpy as np
import pytest

from pwdg.driver import RunConfig, run_history
from pwdg.mesh import Mesh

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def two_triangle_mesh(scale: float = 1.0) -> Mesh:
    """Unit square split along its diagonal, optionally scaled."""
    v = scale * np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return Mesh(v, np.array([[0, 1, 2], [0, 2, 3]]))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@functools.lru_cache(maxsize=None)
def _cached_run(config: RunConfig):
    start = time.perf_counter()
    history = run_history(config)
    return history, time.perf_counter() - start


def adaptive_run(**options):
    """Run (once per session) the adaptive loop and return ``(history, seconds)``."""
    return _cached_run(RunConfig(**options))
