"""Acceptance criteria, one test and one PASS/FAIL line each.

Run ``pytest tests/test_acceptance.py -s`` to see the lines inline; they are
also repeated in the terminal summary.
"""

import time

import numpy as np
from scipy.linalg import expm

from conftest import DESIGN, IDEAL, LOADS, default_sweep, linear, steady, verdict
from yboost import (
    CircuitSpec,
    GatePair,
    OperatingMode,
    PwmConfig,
    TurnsRatio,
    balances,
    delta_from_turns,
    metrics,
    mode_of,
    simulate,
    simulate_steady,
    solve_duty_boost,
    step,
)
from yboost.params import Load


def vo(w):
    return float(np.mean(w.v_co[w.last_periods(10)]))


def test_1_analytical_fidelity():
    delta = delta_from_turns(TurnsRatio(3, 2, 1))
    duty = solve_duty_boost(24, 48)
    verdict("1 analytical fidelity", delta == 5 and duty == 0.5, f"delta={delta!r}, d_boost={duty!r}")


def test_2_boost_oracle():
    t0 = time.perf_counter()
    w = simulate_steady(IDEAL, DESIGN, 500, sources=(False, True))
    elapsed = time.perf_counter() - t0
    v = vo(w)
    ok = w.converged and abs(v / 48 - 1) <= 0.01 and elapsed < 10
    verdict("2 boost oracle", ok, f"vo={v:.4f} V (48 V +-1%), {elapsed:.2f} s wall (< 10 s)")


def test_3_ysource_oracle():
    spec = IDEAL.with_(vin1=12.0, turns=TurnsRatio(3, 2, 1))
    w = simulate_steady(spec, PwmConfig(spec.fsw, 0.15, 0.5), 500, sources=(True, False))
    v = vo(w)
    verdict("3 quasi Y-source oracle", w.converged and abs(v / 48 - 1) <= 0.02, f"vo={v:.4f} V (48 V +-2%)")


def test_4_composition():
    runs = {name: steady(IDEAL, sources=s) for name, s in
            (("both", (True, True)), ("vin1 only", (True, False)), ("vin2 only", (False, True)))}
    levels = {name: vo(w) for name, w in runs.items()}
    ok = all(w.converged for w in runs.values()) and all(abs(v / 48 - 1) <= 0.02 for v in levels.values())
    verdict("4 MIC composition", ok, ", ".join(f"{k} {v:.4f} V" for k, v in levels.items()) + " (48 V +-2%)")


def conservation_runs():
    for spec in (IDEAL, CircuitSpec()):
        for sources in ((True, True), (True, False), (False, True)):
            yield f"{'ideal' if spec == IDEAL else 'default'} {sources}", steady(spec, sources=sources)
    for p in LOADS:
        spec = CircuitSpec(load=Load(watts=p))
        yield f"default {p:g} W", steady(spec)


def test_5_conservation():
    worst = {"energy": 0.0, "volt-seconds": 0.0, "charge": 0.0}
    n = 0
    for _, w in conservation_runs():
        b = balances(w)
        n += 1
        worst["energy"] = max(worst["energy"], abs(b.energy_rel))
        worst["volt-seconds"] = max(worst["volt-seconds"], max(abs(v) for v in b.volt_seconds.values()) / w.spec.vin2)
        worst["charge"] = max(worst["charge"], max(abs(q) for q in b.charges.values()) / b.i_load)
    ok = all(v <= 0.005 for v in worst.values())
    verdict("5 conservation", ok, f"{n} runs, worst relative residuals " +
            ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + " (each <= 5e-3)")


def test_6_trends():
    t0 = time.perf_counter()
    default_sweep.cache_clear()
    table = default_sweep()
    elapsed = time.perf_counter() - t0
    eta, s1, s2 = (table.column(c) for c in ("efficiency", "share1", "share2"))
    a = bool(np.all(np.diff(eta) > 0))
    b = bool(np.all(s2 >= 0.5) and np.all(np.diff(s2) >= 0))
    c = bool(np.all(s1 + s2 == 1.0))
    ok = table.ok and a and b and c and elapsed < 120
    verdict(
        "6 trend reproduction", ok,
        f"eta {np.round(eta, 3).tolist()} increasing={a}; share2 {np.round(s2, 3).tolist()} "
        f"majority/non-decreasing={b}; sums exact={c}; {elapsed:.1f} s (< 120 s)",
    )


def test_7_integrator_order():
    A = np.array([[0.0, 1.0, 0.0], [-9.0, -0.2, 1.0], [0.0, -1.0, -3.0]])
    x0 = np.array([1.0, 0.0, 0.5])
    h = 0.05
    errors = [np.linalg.norm(step(linear(A), x0, [0.0], dt) - expm(A * dt) @ x0) for dt in (h, h / 2)]
    ratio = errors[0] / errors[1]
    verdict("7 integrator order", ratio >= 14, f"one-step error ratio {ratio:.2f} (>= 14)")


def test_8_mode_logic():
    table = {
        (True, False): OperatingMode.MODE1,
        (True, True): OperatingMode.MODE2,
        (False, True): OperatingMode.MODE3,
        (False, False): OperatingMode.MODE4,
    }
    modes_ok = all(mode_of(GatePair(*g)) is m for g, m in table.items())
    # both switches off with the output above both inputs: every diode blocks
    # and the load alone discharges the output capacitor
    spec = CircuitSpec()
    r = spec.load_resistance()
    x0 = [0, 0, 0, 0, 0, 48.0]
    w = simulate(spec, PwmConfig(spec.fsw, 0.0, 0.0), 0.02, 200, x0=x0)
    all_mode4 = bool(np.all(w.mode == 4))
    tau = -np.polyfit(w.t, np.log(w.v_co), 1)[0] ** -1
    rc = r * spec.co
    decay_ok = abs(tau / rc - 1) <= 0.01
    verdict(
        "8 mode logic", modes_ok and all_mode4 and decay_ok,
        f"4-case table ok={modes_ok}; Mode 4 throughout={all_mode4}; "
        f"decay tau={tau * 1e3:.4f} ms vs R*co={rc * 1e3:.4f} ms (1%)",
    )
