import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from yboost import GatePair, OperatingMode, PwmConfig, carrier, edges_in_period, gates_at, mode_of

CFG = PwmConfig(20e3, 0.15, 0.5)


def test_carrier_examples():
    assert carrier(0, 20e3) == 0
    assert carrier(25e-6, 20e3) == pytest.approx(0.5)
    assert carrier(75e-6, 20e3) == pytest.approx(0.5)


@pytest.mark.parametrize("c, expected", [(0.10, (True, True)), (0.30, (False, True)), (0.90, (False, False))])
def test_gates_examples(c, expected):
    assert gates_at(c / CFG.fsw, CFG) == GatePair(*expected)


def test_mode_examples():
    assert mode_of(GatePair(True, False)) is OperatingMode.MODE1
    assert mode_of(GatePair(True, True)) is OperatingMode.MODE2
    assert mode_of(GatePair(False, True)) is OperatingMode.MODE3
    assert mode_of(GatePair(False, False)) is OperatingMode.MODE4


def test_mode_bijection():
    modes = {mode_of(GatePair(a, b)) for a, b in itertools.product((False, True), repeat=2)}
    assert modes == set(OperatingMode)


def test_edges_examples():
    assert edges_in_period(CFG) == pytest.approx([0, 7.5e-6, 25e-6, 50e-6], rel=1e-12)
    assert edges_in_period(PwmConfig(20e3, 0.5, 0.5)) == pytest.approx([0, 25e-6, 50e-6], rel=1e-12)
    assert edges_in_period(PwmConfig(20e3, 0, 0)) == pytest.approx([0, 50e-6], rel=1e-12)


def test_zero_and_full_duty():
    t = np.linspace(0, 1e-4, 97, endpoint=False)
    assert not any(gates_at(x, PwmConfig(20e3, 0, 1)).sw1 for x in t)
    assert all(gates_at(x, PwmConfig(20e3, 0, 1)).sw2 for x in t)


duty = st.floats(0, 1)


@given(st.floats(1e3, 1e6), duty, duty)
def test_duty_recovery(fsw, d1, d2):
    # the gate is constant between consecutive edges, so the on-measure is
    # the summed length of the intervals whose midpoint is on
    cfg = PwmConfig(fsw, d1, d2)
    edges = edges_in_period(cfg)
    on = [0.0, 0.0]
    for a, b in zip(edges[:-1], edges[1:]):
        g = gates_at(0.5 * (a + b), cfg)
        on[0] += (b - a) * g.sw1
        on[1] += (b - a) * g.sw2
    assert on[0] == pytest.approx(d1 / fsw, rel=1e-12, abs=1e-18)
    assert on[1] == pytest.approx(d2 / fsw, rel=1e-12, abs=1e-18)


@given(duty, duty, st.floats(0, 1e-2))
def test_synchronized_on_intervals(a, b, t):
    d1, d2 = sorted((a, b))
    g = gates_at(t, PwmConfig(20e3, d1, d2))
    assert not g.sw1 or g.sw2
