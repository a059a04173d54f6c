"""Shared-carrier PWM for the two switches and switch-state mode classification.

Both channels compare their duty against one sawtooth, the software analogue of
a slave PWM controller slaved to the master's timing ramp.  Pulses are
leading-edge aligned: every switch turns on at the start of the period.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple


@dataclass(frozen=True)
class PwmConfig:
    fsw: float
    d1: float  # quasi Y-source switch
    d2: float  # boost switch

    def __post_init__(self):
        if not (math.isfinite(self.fsw) and self.fsw > 0):
            raise ValueError(f"non-positive frequency: fsw={self.fsw!r}")
        for name in ("d1", "d2"):
            d = getattr(self, name)
            if not 0.0 <= d <= 1.0:
                raise ValueError(f"{name}={d!r} outside [0, 1]")

    @property
    def period(self) -> float:
        return 1.0 / self.fsw


class GatePair(NamedTuple):
    sw1: bool
    sw2: bool


class OperatingMode(enum.IntEnum):
    MODE1 = 1  # SW1 on, SW2 off
    MODE2 = 2  # both on
    MODE3 = 3  # SW1 off, SW2 on
    MODE4 = 4  # both off: no source feeds the load


def carrier(t: float, fsw: float) -> float:
    """Sawtooth in [0, 1) shared by both channels."""
    x = t * fsw
    return x - math.floor(x)


def gates_at(t: float, cfg: PwmConfig) -> GatePair:
    c = carrier(t, cfg.fsw)
    return GatePair(c < cfg.d1, c < cfg.d2)


def gates_for_carrier(c: float, cfg: PwmConfig) -> GatePair:
    return GatePair(c < cfg.d1, c < cfg.d2)


_MODES = {
    GatePair(True, False): OperatingMode.MODE1,
    GatePair(True, True): OperatingMode.MODE2,
    GatePair(False, True): OperatingMode.MODE3,
    GatePair(False, False): OperatingMode.MODE4,
}


def mode_of(g: GatePair) -> OperatingMode:
    return _MODES[GatePair(bool(g[0]), bool(g[1]))]


def edges_in_period(cfg: PwmConfig) -> list[float]:
    """Sorted, de-duplicated switching instants of one period, both ends included."""
    period = 1.0 / cfg.fsw
    return sorted({0.0, cfg.d1 / cfg.fsw, cfg.d2 / cfg.fsw, period})
