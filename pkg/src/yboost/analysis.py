"""Steady-state metrics, loss decomposition, conservation checks and load sweeps.

All averages are trapezoidal over the final ``AVERAGING_PERIODS`` recorded
periods.  Each sample interval is evaluated with the configuration that was
active on it, so diode and capacitor currents are exact affine probes of the
state rather than finite differences.

Gate-drive and V-I overlap losses are not part of the circuit model; they are
charged to the channel that causes them and added to that source's input
power.  Efficiency is therefore ``p_out / (p_in1 + p_in2)`` with both the
circuit losses and these switching losses inside the denominator.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .averaged import boost_gain, ysource_gain
from .circuit import I_L1, I_L2, I_LM, LOOP_RESISTANCE, V_C1, V_C2, V_CO, CircuitError, Topology
from .params import CircuitSpec, Load
from .pwm import PwmConfig
from .simulator import AVERAGING_PERIODS, SimulationError, Waveforms, simulate_steady

# Switching-transition time that turns k_ovl into seconds of full overlap per edge.
T_NORM = 1e-6

SWEEP_HEADER = (
    "p_out_req", "vo_avg", "vo_ripple_pp", "p_in1", "p_in2", "p_out", "eta",
    "share1", "share2", "p_loss_cond", "p_loss_ovl", "p_loss_gate", "dcm1", "dcm2",
)


class SteadyStateError(SimulationError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class LossBreakdown:
    conduction: float
    overlap: float
    gate: float
    # per channel, used to attribute switching losses to the sources
    overlap_ch: tuple = (0.0, 0.0)
    gate_ch: tuple = (0.0, 0.0)

    @property
    def total(self) -> float:
        return self.conduction + self.overlap + self.gate


@dataclass(frozen=True)
class RunReport:
    vo_avg: float
    vo_ripple_pp: float
    p_in1: float
    p_in2: float
    p_out: float
    p_loss_conduction: float
    p_loss_overlap: float
    p_loss_gate: float
    efficiency: float
    share1: float
    share2: float
    dcm1: bool
    dcm2: bool
    p_src1: float = 0.0  # circuit-level mean(vin1 * i_src1)
    p_src2: float = 0.0
    sharing_indeterminate: bool = False

    @property
    def p_in(self) -> float:
        return self.p_in1 + self.p_in2

    @property
    def p_loss(self) -> float:
        return self.p_loss_conduction + self.p_loss_overlap + self.p_loss_gate


@dataclass(frozen=True)
class Balances:
    """Conservation residuals over the averaging window."""

    energy: float  # W: p_src - p_out - conduction - dE/dt
    throughput: float  # W
    volt_seconds: dict  # inductor -> mean L di/dt (V)
    charges: dict  # capacitor -> mean C dv/dt (A)
    i_load: float  # A, mean load current

    @property
    def energy_rel(self) -> float:
        return abs(self.energy) / self.throughput if self.throughput > 0 else abs(self.energy)


class _Window:
    """Per-interval view of the averaging window."""

    def __init__(self, w: Waveforms, periods: int):
        if w.steady_period is None:
            raise SteadyStateError(
                f"steady state not reached (residual {w.residual:.3g})", w.residual
            )
        if w.n_periods < periods:
            raise SteadyStateError(
                f"steady state not reached: {w.n_periods} steady periods recorded, {periods} needed",
                w.residual,
            )
        sl = w.last_periods(periods)
        k = np.arange(sl.start + 1, sl.stop)
        self.w = w
        self.dt = w.t[k] - w.t[k - 1]
        self.span = float(w.t[sl.stop - 1] - w.t[sl.start])
        self.uid = w.cfg[k]
        self.x0 = w.x[k - 1].copy()
        self.x1 = w.x[k]
        for uid in np.unique(self.uid):
            clamped = list(w.models[uid].clamped)
            if clamped:
                rows = np.flatnonzero(self.uid == uid)
                self.x0[np.ix_(rows, clamped)] = 0.0
        self.sl = sl

    def mean(self, a0: np.ndarray, a1: np.ndarray) -> float:
        return float(np.sum(self.dt * 0.5 * (a0 + a1)) / self.span)

    def mean_state(self, fn) -> float:
        return self.mean(fn(self.x0), fn(self.x1))

    def probe(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Probe values at both ends of every interval (zero where absent)."""
        a0 = np.zeros(len(self.dt))
        a1 = np.zeros(len(self.dt))
        for uid in np.unique(self.uid):
            m = self.w.models[uid]
            if name not in m.probes:
                continue
            rows = self.uid == uid
            a0[rows] = m.probe(name, self.x0[rows], self.w.u)
            a1[rows] = m.probe(name, self.x1[rows], self.w.u)
        return a0, a1

    def mean_probe(self, name: str, power: int = 1) -> float:
        a0, a1 = self.probe(name)
        return self.mean(a0**power, a1**power)

    def derivative(self) -> tuple[np.ndarray, np.ndarray]:
        d0 = np.zeros_like(self.x0)
        d1 = np.zeros_like(self.x1)
        for uid in np.unique(self.uid):
            m = self.w.models[uid]
            rows = self.uid == uid
            extra = m.B @ self.w.u + m.c
            d0[rows] = self.x0[rows] @ m.A.T + extra
            d1[rows] = self.x1[rows] @ m.A.T + extra
        return d0, d1


def _source_on(w: Waveforms) -> tuple[bool, bool]:
    return (
        bool(w.sources[0]) and w.topology != Topology.BOOST,
        bool(w.sources[1]) and w.topology != Topology.YSOURCE,
    )


def _series_resistances(spec: CircuitSpec) -> dict:
    return {
        I_L1: spec.r_src1 + spec.esr_l1,
        I_LM: spec.esr_lm,
        I_L2: spec.r_src2 + spec.esr_l2,
    }


def _has_ysource(w: Waveforms) -> bool:
    return w.topology in (Topology.MIC, Topology.YSOURCE)


def _conduction(win: _Window, spec: CircuitSpec) -> float:
    loss = 0.0
    for ix, r in _series_resistances(spec).items():
        if r:
            loss += r * win.mean_state(lambda x, ix=ix: x[:, ix] ** 2)
    if _has_ysource(win.w):
        loss += LOOP_RESISTANCE * win.mean_probe("i:C1", 2)
    if spec.v_diode:
        for d in ("d1", "d2", "d3"):
            loss += spec.v_diode * win.mean_probe(f"i:{d}")
    return loss


def _output_currents(win: _Window) -> tuple[float, float]:
    """Mean current each channel delivers into the output node."""
    return win.mean_probe("i:d2"), win.mean_probe("i:d3")


def _losses(win: _Window, spec: CircuitSpec) -> LossBreakdown:
    on = _source_on(win.w)
    fsw = win.w.pwm.fsw
    i_out = _output_currents(win)
    vin = (spec.vin1, spec.vin2)
    ovl = tuple(
        spec.k_ovl * vin[i] * max(i_out[i], 0.0) * fsw * T_NORM if on[i] else 0.0 for i in range(2)
    )
    gate = tuple(spec.p_gate if on[i] else 0.0 for i in range(2))
    return LossBreakdown(
        conduction=_conduction(win, spec),
        overlap=sum(ovl),
        gate=sum(gate),
        overlap_ch=ovl,
        gate_ch=gate,
    )


def loss_model(w: Waveforms, spec: Optional[CircuitSpec] = None, periods: int = AVERAGING_PERIODS) -> LossBreakdown:
    """Conduction, V-I overlap and gate-drive losses of a steady-state run.

    Overlap per channel is ``k_ovl * vin_i * I_out_i * fsw * T_NORM`` with
    ``I_out_i`` the mean current that channel feeds to the output; gate drive
    is ``p_gate`` per channel whose source is connected.
    """
    spec = w.spec if spec is None else spec
    return _losses(_Window(w, periods), spec)


def _indeterminate(w: Waveforms, spec: CircuitSpec) -> bool:
    """Both sources active, lossless, and both converters tuned to one output."""
    if w.topology != Topology.MIC or not all(w.sources):
        return False
    resistive = (spec.r_src1, spec.r_src2, spec.esr_l1, spec.esr_l2, spec.esr_lm, spec.v_diode)
    if any(resistive):
        return False
    try:
        v1 = spec.vin1 * ysource_gain(w.pwm.d1, spec.delta)
        v2 = spec.vin2 * boost_gain(w.pwm.d2)
    except ValueError:
        return False
    return math.isclose(v1, v2, rel_tol=1e-9)


def metrics(w: Waveforms, spec: Optional[CircuitSpec] = None, periods: int = AVERAGING_PERIODS) -> RunReport:
    """Averaged report over the final ``periods`` periods of a steady-state run."""
    spec = w.spec if spec is None else spec
    win = _Window(w, periods)
    on = _source_on(w)
    p_src = [0.0, 0.0]
    if on[0]:
        p_src[0] = spec.vin1 * win.mean_state(lambda x: x[:, I_L1])
    if on[1]:
        p_src[1] = spec.vin2 * win.mean_state(lambda x: x[:, I_L2])
    r = w.load_ohms
    p_out = win.mean_state(lambda x: x[:, V_CO] ** 2) / r
    vo = w.x[win.sl, V_CO]
    losses = _losses(win, spec)
    p_in = [p_src[i] + losses.overlap_ch[i] + losses.gate_ch[i] for i in range(2)]
    total = p_in[0] + p_in[1]
    indeterminate = _indeterminate(w, spec)
    if total > 0 and not indeterminate:
        share1 = p_in[0] / total
        share2 = 1.0 - share1
    else:
        share1 = share2 = math.nan
    return RunReport(
        vo_avg=win.mean_state(lambda x: x[:, V_CO]),
        vo_ripple_pp=float(vo.max() - vo.min()),
        p_in1=p_in[0],
        p_in2=p_in[1],
        p_out=p_out,
        p_loss_conduction=losses.conduction,
        p_loss_overlap=losses.overlap,
        p_loss_gate=losses.gate,
        efficiency=p_out / total if total > 0 else math.nan,
        share1=share1,
        share2=share2,
        dcm1=bool(w.dcm[0]),
        dcm2=bool(w.dcm[1]),
        p_src1=p_src[0],
        p_src2=p_src[1],
        sharing_indeterminate=indeterminate,
    )


def _stored_energy(spec: CircuitSpec, x: np.ndarray) -> float:
    return 0.5 * (
        spec.l1 * x[I_L1] ** 2 + spec.lm * x[I_LM] ** 2 + spec.l2 * x[I_L2] ** 2
        + spec.c1 * x[V_C1] ** 2 + spec.c2 * x[V_C2] ** 2 + spec.co * x[V_CO] ** 2
    )


def balances(w: Waveforms, spec: Optional[CircuitSpec] = None, periods: int = AVERAGING_PERIODS) -> Balances:
    """Energy, volt-second and charge balance residuals of a steady-state run."""
    spec = w.spec if spec is None else spec
    win = _Window(w, periods)
    rep = metrics(w, spec, periods)
    p_src = rep.p_src1 + rep.p_src2
    x_a, x_b = w.x[win.sl.start], w.x[win.sl.stop - 1]
    d_stored = (_stored_energy(spec, x_b) - _stored_energy(spec, x_a)) / win.span
    energy = p_src - rep.p_out - _conduction(win, spec) - d_stored
    d0, d1 = win.derivative()
    ysrc = _has_ysource(w)
    inductors = {"L1": (I_L1, spec.l1), "Lm": (I_LM, spec.lm)} if ysrc else {}
    if w.topology != Topology.YSOURCE:
        inductors["L2"] = (I_L2, spec.l2)
    caps = {"C1": (V_C1, spec.c1), "C2": (V_C2, spec.c2)} if ysrc else {}
    caps["Co"] = (V_CO, spec.co)
    return Balances(
        energy=energy,
        throughput=max(p_src, rep.p_out),
        volt_seconds={n: val * win.mean(d0[:, ix], d1[:, ix]) for n, (ix, val) in inductors.items()},
        charges={n: val * win.mean(d0[:, ix], d1[:, ix]) for n, (ix, val) in caps.items()},
        i_load=rep.vo_avg / w.load_ohms,
    )


@dataclass
class SweepRow:
    p_out_req: float
    report: Optional[RunReport] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.report is not None


@dataclass
class SweepTable:
    rows: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r.report, name) if r.ok else math.nan for r in self.rows])

    def to_csv(self, fh: Optional[io.TextIOBase] = None) -> str:
        buf = io.StringIO() if fh is None else fh
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(SWEEP_HEADER)
        for row in self.rows:
            r = row.report
            if r is None:
                # a failed row keeps its place; every measured column is nan
                out.writerow([_fmt(row.p_out_req)] + ["nan"] * (len(SWEEP_HEADER) - 1))
                continue
            values = (
                row.p_out_req, r.vo_avg, r.vo_ripple_pp, r.p_in1, r.p_in2, r.p_out, r.efficiency,
                r.share1, r.share2, r.p_loss_conduction, r.p_loss_overlap, r.p_loss_gate,
            )
            out.writerow([_fmt(v) for v in values] + [int(r.dcm1), int(r.dcm2)])
        return buf.getvalue() if fh is None else ""


def _fmt(v: float) -> str:
    return format(float(v), ".10g")


def sweep(
    spec: CircuitSpec,
    pwm: PwmConfig,
    loads: Sequence[float],
    *,
    vo_target: float = 48.0,
    samples_per_period: int = 500,
    **sim_kwargs,
) -> SweepTable:
    """One steady-state run per requested output power.

    The load of each row is the resistance ``vo_target**2 / p``; duties stay
    at ``pwm`` (open loop).  A failing row is recorded, not raised.
    """
    loads = [float(p) for p in loads]
    if not loads:
        raise ValueError("load list is empty")
    if any(not (p > 0 and math.isfinite(p)) for p in loads):
        raise ValueError(f"loads must be positive and finite: {loads}")
    if any(b <= a for a, b in zip(loads, loads[1:])):
        raise ValueError(f"loads must be strictly increasing: {loads}")
    table = SweepTable()
    for p in loads:
        row_spec = spec.with_(load=Load(watts=p))
        try:
            w = simulate_steady(row_spec, pwm, samples_per_period, vo_target=vo_target, **sim_kwargs)
            table.rows.append(SweepRow(p, metrics(w, row_spec)))
        except (SimulationError, CircuitError, ArithmeticError, ValueError) as exc:
            table.rows.append(SweepRow(p, error=f"{type(exc).__name__}: {exc}"))
    return table
