"""Command-line front end.

Exit codes: 0 success, 1 invalid input (config, validation, infeasible
request, unreadable file), 2 numerical failure (divergence, no steady state,
inconsistent diode configuration, or any failed sweep row).
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from . import config as cfgmod
from .analysis import RunReport, SteadyStateError, metrics, sweep
from .averaged import boost_gain, design_operating_point, solve_duty_boost, ysource_gain
from .circuit import CircuitError, NoConsistentConfiguration
from .params import SpecError, TurnsRatio, delta_from_turns
from .simulator import STEADY_RTOL, SimulationError, Waveforms, simulate, simulate_steady

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2

WAVEFORM_HEADER = "t,i_l1,i_lm,i_l2,v_c1,v_c2,v_co,i_src1,i_src2,i_load,sw1,sw2,mode"
MAX_TURNS = 12


class InfeasibleDesign(ValueError):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="yboost", description="Double-input boost / quasi Y-source converter tool")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required):
        sp.add_argument("--config", help="TOML config (defaults to the built-in circuit)")
        sp.add_argument("--out", required=out_required, help="CSV output path")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    sp = sub.add_parser("steady", help="ideal operating point for a target voltage")
    common(sp, False)
    sp.add_argument("--target", type=float, help="output voltage (default: vo_target of the config)")

    sp = sub.add_parser("simulate", help="time-domain run, waveform CSV and report")
    common(sp, True)
    sp.add_argument("--t-end", type=float, help="fixed horizon in seconds (default: run to steady state)")
    sp.add_argument("--spp", type=int, help="samples per switching period")
    sp.add_argument(
        "--keep", type=int, default=None,
        help="periods written to the CSV (default: the averaging window; 0 = all)",
    )

    sp = sub.add_parser("sweep", help="steady-state load sweep, one CSV row per load")
    common(sp, True)

    sp = sub.add_parser("design", help="turns ratios reaching a target with a duty in range")
    sp.add_argument("--vin1", type=float, required=True)
    sp.add_argument("--vin2", type=float, required=True)
    sp.add_argument("--target", type=float, required=True)
    sp.add_argument("--duty", type=float, help="exact Y-source duty wanted")
    sp.add_argument("--duty-min", type=float, default=0.0)
    sp.add_argument("--duty-max", type=float, default=0.5)
    return p


def _print_report(r: RunReport, out=None) -> None:
    out = sys.stdout if out is None else out
    rows = [
        ("vo_avg", r.vo_avg, "V"), ("vo_ripple_pp", r.vo_ripple_pp, "V"),
        ("p_in1", r.p_in1, "W"), ("p_in2", r.p_in2, "W"), ("p_out", r.p_out, "W"),
        ("p_loss_conduction", r.p_loss_conduction, "W"), ("p_loss_overlap", r.p_loss_overlap, "W"),
        ("p_loss_gate", r.p_loss_gate, "W"), ("efficiency", r.efficiency, ""),
        ("share1", r.share1, ""), ("share2", r.share2, ""),
    ]
    for name, value, unit in rows:
        print(f"{name:<18} {value:.6g} {unit}".rstrip(), file=out)
    print(f"{'dcm1':<18} {r.dcm1}", file=out)
    print(f"{'dcm2':<18} {r.dcm2}", file=out)
    if r.sharing_indeterminate:
        print("sharing            indeterminate (lossless sources tuned to one output)", file=out)


def run_steady(args) -> int:
    rc = cfgmod.load(args.config, args.overrides)
    target = rc.vo_target if args.target is None else args.target
    spec = rc.spec
    op = design_operating_point(spec, target)
    g1, g2 = ysource_gain(op.d_st, spec.delta), boost_gain(op.d_boost)
    print(f"delta     {spec.delta:.10g}  (turns {spec.turns})")
    print(f"d_st      {op.d_st:.10g}")
    print(f"d_boost   {op.d_boost:.10g}")
    print(f"gain_y    {g1:.10g}")
    print(f"gain_b    {g2:.10g}")
    print(f"vo_y      {spec.vin1 * g1:.10g} V")
    print(f"vo_b      {spec.vin2 * g2:.10g} V")
    return EXIT_OK


def write_waveforms(w: Waveforms, fh, periods: Optional[int] = None) -> None:
    """Waveform CSV; ``periods`` limits output to the final recorded periods."""
    sl = slice(None) if not periods else w.last_periods(min(periods, w.n_periods))
    data = np.column_stack([
        w.t[sl], w.x[sl], w.i_src1[sl], w.i_src2[sl], w.i_load[sl],
        w.sw1[sl].astype(int), w.sw2[sl].astype(int), w.mode[sl],
    ])
    fmt = ["%.12g"] * 10 + ["%d"] * 3
    np.savetxt(fh, data, fmt=fmt, delimiter=",", header=WAVEFORM_HEADER, comments="")


def run_simulate(args) -> int:
    rc = cfgmod.load(args.config, args.overrides)
    spp = rc.samples_per_period if args.spp is None else args.spp
    kw = dict(sources=rc.sources, vo_target=rc.vo_target)
    if args.t_end is None:
        w = simulate_steady(rc.spec, rc.pwm, spp, **kw)
        keep = None if args.keep in (None, 0) else args.keep
    else:
        keep = None if args.keep == 0 else (args.keep or 20)
        w = simulate(rc.spec, rc.pwm, args.t_end, spp, keep_periods=keep, **kw)
    with open(args.out, "w", newline="") as fh:
        write_waveforms(w, fh, keep)
    if w.steady_period is None:
        print(
            f"error: steady state not reached within {args.t_end} s "
            f"(last boundary change {w.residual:.3g}, need < {STEADY_RTOL:g})",
            file=sys.stderr,
        )
        return EXIT_NUMERIC
    _print_report(metrics(w, rc.spec))
    return EXIT_OK


def run_sweep(args) -> int:
    rc = cfgmod.load(args.config, args.overrides)
    table = sweep(
        rc.spec, rc.pwm, rc.loads, vo_target=rc.vo_target,
        samples_per_period=rc.samples_per_period, sources=rc.sources,
    )
    with open(args.out, "w", newline="") as fh:
        table.to_csv(fh)
    for row in table:
        if not row.ok:
            print(f"row {row.p_out_req:g} W failed: {row.error}", file=sys.stderr)
    return EXIT_OK if table.ok else EXIT_NUMERIC


def design_ratios(vin1: float, target: float, duty_min: float, duty_max: float, duty: Optional[float] = None):
    """Turns ratios (all counts <= MAX_TURNS) whose Y-source duty for ``target`` lies in range.

    Returns ``(TurnsRatio, delta, d_st)`` sorted by total turns, then counts.
    """
    if duty is not None:
        duty_min = duty_max = duty
    if not 0 <= duty_min <= duty_max <= 1:
        raise ValueError(f"duty range [{duty_min}, {duty_max}] must lie within [0, 1]")
    need = 1.0 - vin1 / target  # = delta * d_st
    found = []
    for n1 in range(1, MAX_TURNS + 1):
        for n2 in range(2, MAX_TURNS + 1):
            for n3 in range(1, n2):
                t = TurnsRatio(n1, n2, n3)
                delta = delta_from_turns(t)
                d = need / delta
                if duty_min - 1e-12 <= d <= duty_max + 1e-12 and delta * d < 1:
                    found.append((t, delta, d))
    if not found:
        raise InfeasibleDesign(
            f"no turns ratio with counts <= {MAX_TURNS} reaches {target:g} V from {vin1:g} V "
            f"with a duty in [{duty_min:g}, {duty_max:g}] (needs delta in "
            f"[{_ratio(need, duty_max)}, {_ratio(need, duty_min)}], largest available {2 * MAX_TURNS})"
        )
    found.sort(key=lambda r: (r[0].n1 + r[0].n2 + r[0].n3, r[0].n1, r[0].n2, r[0].n3))
    return found


def _ratio(a: float, b: float) -> str:
    return "inf" if b == 0 else f"{a / b:.4g}"


def run_design(args) -> int:
    if args.target < max(args.vin1, args.vin2) or min(args.vin1, args.vin2) <= 0:
        raise ValueError(
            f"cannot buck: target {args.target:g} V must be at least max(vin1, vin2) with positive inputs"
        )
    rows = design_ratios(args.vin1, args.target, args.duty_min, args.duty_max, args.duty)
    d_boost = solve_duty_boost(args.vin2, args.target)
    print(f"target {args.target:g} V; boost duty {d_boost:.10g} for vin2 = {args.vin2:g} V")
    print("n1:n2:n3  delta      d_st")
    for t, delta, d in rows:
        print(f"{str(t):<9} {delta:<10.6g} {d:.10g}")
    return EXIT_OK


_COMMANDS = {"steady": run_steady, "simulate": run_simulate, "sweep": run_sweep, "design": run_design}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (SimulationError, NoConsistentConfiguration, CircuitError, SteadyStateError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SpecError as exc:
        print("error: invalid circuit: " + "; ".join(exc.violations), file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: I/O: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
