"""Simulation library for a double-input converter: a quasi Y-source stage and a
boost stage sharing one output capacitor and load."""

from .analysis import Balances, LossBreakdown, RunReport, SweepTable, balances, loss_model, metrics, sweep
from .averaged import (
    BuckRequestError,
    GainPoleError,
    OperatingPoint,
    boost_gain,
    design_operating_point,
    solve_duty_boost,
    solve_duty_ysource,
    ysource_gain,
)
from .circuit import NoConsistentConfiguration, Topology, assemble_model, resolve_diodes
from .params import CircuitSpec, Load, SpecError, SourceOrderWarning, TurnsRatio, delta_from_turns, validate
from .pwm import GatePair, OperatingMode, PwmConfig, carrier, edges_in_period, gates_at, mode_of
from .simulator import (
    DivergenceError,
    NotConvergedError,
    SimulationError,
    Waveforms,
    simulate,
    simulate_steady,
    step,
)

__version__ = "0.1.0"
