import numpy as np
import pytest
from scipy.linalg import expm

from conftest import DESIGN, IDEAL, linear
from yboost import CircuitSpec, DivergenceError, PwmConfig, gates_at, simulate, simulate_steady, step
from yboost.simulator import rk4_propagator


def test_null_dynamics():
    x = np.array([1.0, -2.0, 3.5])
    assert np.array_equal(step(linear(np.zeros((3, 3))), x, [0.0], 0.37), x)


def test_scalar_decay():
    assert step(linear([[-1.0]]), [1.0], [0.0], 0.1)[0] == pytest.approx(np.exp(-0.1), abs=1e-6)


def test_fourth_order():
    A = np.array([[0.0, 1.0], [-4.0, -0.3]])
    x0 = np.array([1.0, 0.5])
    errors = [np.linalg.norm(step(linear(A), x0, [0.0], h) - expm(A * h) @ x0) for h in (0.1, 0.05)]
    assert errors[0] / errors[1] >= 14


def test_propagator_matches_step():
    A = np.array([[-2.0, 1.0], [0.5, -1.0]])
    b = np.array([0.3, -0.7])
    P, Q = rk4_propagator(A, 0.01)
    x = np.array([1.0, 2.0])
    np.testing.assert_allclose(P @ x + Q @ b, step(linear(A, b), x, [0.0], 0.01), rtol=1e-14)


def test_edges_are_samples():
    w = simulate(IDEAL, DESIGN, 5 / DESIGN.fsw, 200)
    T = 1 / DESIGN.fsw
    for k in range(5):
        for edge in (0.0, 0.15 * T, 0.5 * T, T):
            assert np.min(np.abs(w.t - (k * T + edge))) < 1e-15
    assert np.all(np.diff(w.t) > 0)
    # gates of each interval equal the comparator at its midpoint
    mid = 0.5 * (w.t[:-1] + w.t[1:])
    g = np.array([gates_at(t, DESIGN) for t in mid])
    assert np.array_equal(g[:, 0], w.sw1[:-1]) and np.array_equal(g[:, 1], w.sw2[:-1])


@pytest.mark.parametrize("sources, topology", [((True, False), "ysource"), ((False, True), "boost")])
def test_single_source_equivalence(sources, topology):
    t_end = 40 / DESIGN.fsw
    mic = simulate(IDEAL, DESIGN, t_end, 200, sources=sources)
    alone = simulate(IDEAL, DESIGN, t_end, 200, topology=topology)
    assert np.array_equal(mic.t, alone.t)
    np.testing.assert_allclose(mic.v_co, alone.v_co, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(mic.i_src1, alone.i_src1, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(mic.i_src2, alone.i_src2, rtol=1e-9, atol=1e-9)


def test_divergence_is_reported():
    spec = IDEAL.with_(l2=1e-9)
    with pytest.raises(DivergenceError, match="diverged"):
        simulate(spec, PwmConfig(20e3, 0.15, 1.0), 0.01, 200)


@pytest.mark.parametrize("spec", [CircuitSpec(), IDEAL], ids=["default", "ideal"])
def test_zero_duty_does_not_boost(spec):
    w = simulate_steady(spec, PwmConfig(20e3, 0.0, 0.0), 200)
    assert w.converged
    assert np.mean(w.v_co[w.last_periods(10)]) <= max(spec.vin1, spec.vin2) + 1e-6


def test_boost_only_fixed_horizon():
    w = simulate(IDEAL, DESIGN, 0.5, 500, sources=(False, True), keep_periods=20)
    assert np.mean(w.v_co[w.last_periods(20)]) == pytest.approx(48.0, rel=0.01)


def test_full_design_point(run):
    w = run()
    assert w.converged
    assert np.mean(w.v_co[w.last_periods(10)]) == pytest.approx(48.0, rel=0.02)


def test_samples_per_period_floor():
    with pytest.raises(ValueError):
        simulate(IDEAL, DESIGN, 1e-3, 100)
