"""Ideal (lossless, CCM) steady-state gains and duty solvers."""

from __future__ import annotations

from dataclasses import dataclass

from .params import CircuitSpec, delta_from_turns


class GainPoleError(ValueError):
    pass


class BuckRequestError(ValueError):
    """The requested output is below the input; neither converter can buck."""


@dataclass(frozen=True)
class OperatingPoint:
    d_st: float
    d_boost: float
    vo_target: float


def ysource_gain(d_st: float, delta: float) -> float:
    """Quasi Y-source voltage gain ``1 / (1 - delta * d_st)``."""
    if d_st < 0:
        raise ValueError(f"negative duty {d_st}")
    if delta < 1:
        raise ValueError(f"winding factor must be >= 1, got {delta}")
    if delta * d_st >= 1:
        raise GainPoleError(f"gain pole: delta*d_st = {delta * d_st:g} >= 1")
    return 1.0 / (1.0 - delta * d_st)


def boost_gain(d: float) -> float:
    if not 0 <= d < 1:
        raise GainPoleError(f"boost duty must lie in [0, 1), got {d}")
    return 1.0 / (1.0 - d)


def _check_step_up(vin: float, vo: float) -> None:
    if vin <= 0:
        raise ValueError(f"input voltage must be positive, got {vin}")
    if vo < vin:
        raise BuckRequestError(f"cannot buck: vo={vo} V is below vin={vin} V")


def solve_duty_ysource(vin: float, vo: float, delta: float) -> float:
    _check_step_up(vin, vo)
    if delta < 1:
        raise ValueError(f"winding factor must be >= 1, got {delta}")
    return (1.0 - vin / vo) / delta


def solve_duty_boost(vin: float, vo: float) -> float:
    _check_step_up(vin, vo)
    return 1.0 - vin / vo


def design_operating_point(spec: CircuitSpec, vo_target: float) -> OperatingPoint:
    """Duties that make each converter reach ``vo_target`` on its own."""
    if vo_target < max(spec.vin1, spec.vin2):
        raise BuckRequestError(
            f"cannot buck: target {vo_target} V is below max(vin1, vin2) = "
            f"{max(spec.vin1, spec.vin2)} V"
        )
    delta = delta_from_turns(spec.turns)
    return OperatingPoint(
        d_st=solve_duty_ysource(spec.vin1, vo_target, delta),
        d_boost=solve_duty_boost(spec.vin2, vo_target),
        vo_target=vo_target,
    )
