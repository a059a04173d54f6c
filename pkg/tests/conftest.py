"""Shared steady-state runs, cached per session (each costs well under a second)."""

from functools import lru_cache
from types import SimpleNamespace

import numpy as np
import pytest

from yboost import CircuitSpec, PwmConfig, simulate_steady

DESIGN = PwmConfig(20e3, 0.15, 0.5)
IDEAL = CircuitSpec().idealized()


@lru_cache(maxsize=None)
def steady(spec=IDEAL, pwm=DESIGN, topology="mic", sources=(True, True), load_ohms=None, spp=500):
    return simulate_steady(spec, pwm, spp, topology=topology, sources=sources, load_ohms=load_ohms)


@pytest.fixture(scope="session")
def run():
    return steady


LOADS = (2.5, 5.0, 10.0, 15.0, 20.0, 25.0)


@lru_cache(maxsize=None)
def default_sweep():
    from yboost import sweep

    return sweep(CircuitSpec(), DESIGN, LOADS)


VERDICTS: list = []


def verdict(label: str, ok: bool, detail: str) -> None:
    """Record and print one acceptance line, then fail the test if needed."""
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    VERDICTS.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


def linear(A, b=None):
    """Model stand-in for ``dx/dt = A x + b``, accepted by ``simulator.step``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    return SimpleNamespace(A=A, B=np.zeros((n, 1)), c=np.zeros(n) if b is None else np.asarray(b, float))
