"""Parameter model of the double-input boost / quasi Y-source converter.

Default values reproduce the prototype's circuit table (12 V / 24 V sources,
1 mH input inductors, 470 uF / 150 uF blocking capacitors, 470 uF output
capacitor, 3:2:1 transformer, 20 kHz).  Parasitics and loss coefficients are
engineering defaults, not measured data.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace
from typing import Optional


class SpecError(ValueError):
    """Raised when a :class:`CircuitSpec` violates one or more invariants.

    ``violations`` holds every failed check, not just the first.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class SourceOrderWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TurnsRatio:
    n1: int = 3
    n2: int = 2
    n3: int = 1

    def __str__(self) -> str:
        return f"{self.n1}:{self.n2}:{self.n3}"


def delta_from_turns(turns: TurnsRatio) -> float:
    """Winding factor ``(n1 + n2) / (n2 - n3)`` of the three-winding transformer."""
    n1, n2, n3 = turns.n1, turns.n2, turns.n3
    if min(n1, n2, n3) <= 0:
        raise SpecError([f"non-positive turns count in {turns}"])
    if n2 <= n3:
        raise SpecError([f"degenerate winding factor: n2={n2} must exceed n3={n3}"])
    return (n1 + n2) / (n2 - n3)


@dataclass(frozen=True)
class Load:
    """Either a fixed resistance or a requested output power at the target voltage."""

    ohms: Optional[float] = None
    watts: Optional[float] = None

    def __post_init__(self):
        if (self.ohms is None) == (self.watts is None):
            raise ValueError("Load needs exactly one of ohms= or watts=")

    def resistance(self, vo_target: float) -> float:
        if self.ohms is not None:
            return float(self.ohms)
        return vo_target**2 / self.watts

    @classmethod
    def parse(cls, text) -> "Load":
        """Parse ``"25 W"``, ``"92.16 ohm"`` or a bare number (ohms)."""
        if isinstance(text, Load):
            return text
        if isinstance(text, (int, float)) and not isinstance(text, bool):
            return cls(ohms=float(text))
        if isinstance(text, dict):
            return cls(**{k: float(v) for k, v in text.items()})
        s = str(text).strip().lower().replace(" ", "")
        for suffix, key in (("ohms", "ohms"), ("ohm", "ohms"), ("ω", "ohms"), ("w", "watts")):
            if s.endswith(suffix):
                return cls(**{key: float(s[: -len(suffix)])})
        return cls(ohms=float(s))

    def __str__(self) -> str:
        if self.ohms is not None:
            return f"{self.ohms:g} ohm"
        return f"{self.watts:g} W"


@dataclass(frozen=True)
class CircuitSpec:
    vin1: float = 12.0
    vin2: float = 24.0
    l1: float = 1e-3
    l2: float = 1e-3
    # 1 mH leaves the Y-source in DCM with a ~3 W floor that exceeds the
    # lightest load; 2 mH keeps the boost the majority source down to 2.5 W
    lm: float = 2e-3
    c1: float = 470e-6
    c2: float = 150e-6
    co: float = 470e-6
    turns: TurnsRatio = field(default_factory=TurnsRatio)
    fsw: float = 20e3
    r_src1: float = 0.1
    r_src2: float = 0.05
    esr_l1: float = 0.05
    esr_l2: float = 0.05
    esr_lm: float = 0.05
    v_diode: float = 0.7
    # calibrated once (2.5 W row below 70 %, 25 W row above 85 %), not measured
    k_ovl: float = 1.0
    p_gate: float = 1.5
    load: Load = field(default_factory=lambda: Load(watts=25.0))

    @property
    def delta(self) -> float:
        return delta_from_turns(self.turns)

    def load_resistance(self, vo_target: float = 48.0) -> float:
        return self.load.resistance(vo_target)

    def with_(self, **changes) -> "CircuitSpec":
        """Copy with changes; ``n1``/``n2``/``n3`` and string loads are accepted."""
        turns = {k: changes.pop(k) for k in ("n1", "n2", "n3") if k in changes}
        if turns:
            changes["turns"] = replace(self.turns, **turns)
        if "load" in changes:
            changes["load"] = Load.parse(changes["load"])
        return replace(self, **changes)

    def idealized(self) -> "CircuitSpec":
        """Same circuit with every resistive, diode and switching-loss parasitic zeroed."""
        return replace(
            self,
            r_src1=0.0, r_src2=0.0, esr_l1=0.0, esr_l2=0.0, esr_lm=0.0,
            v_diode=0.0, k_ovl=0.0, p_gate=0.0,
        )

    def as_flat_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "turns":
                out.update(n1=v.n1, n2=v.n2, n3=v.n3)
            elif f.name == "load":
                out["load"] = str(v)
            else:
                out[f.name] = v
        return out


SPEC_KEYS = tuple(CircuitSpec().as_flat_dict())

_POSITIVE = ("l1", "l2", "lm", "c1", "c2", "co")
_NON_NEGATIVE = ("r_src1", "r_src2", "esr_l1", "esr_l2", "esr_lm", "v_diode", "k_ovl", "p_gate")


def violations(spec: CircuitSpec) -> list[str]:
    found = []
    for name in _POSITIVE:
        v = getattr(spec, name)
        if not (math.isfinite(v) and v > 0):
            found.append(f"non-positive {name}: {v!r}")
    if not (math.isfinite(spec.fsw) and spec.fsw > 0):
        found.append(f"non-positive frequency: fsw={spec.fsw!r}")
    for name in _NON_NEGATIVE:
        v = getattr(spec, name)
        if not (math.isfinite(v) and v >= 0):
            found.append(f"negative {name}: {v!r}")
    for name in ("vin1", "vin2"):
        v = getattr(spec, name)
        if not (math.isfinite(v) and v >= 0):
            found.append(f"negative {name}: {v!r}")
    t = spec.turns
    if any(not isinstance(n, int) or isinstance(n, bool) for n in (t.n1, t.n2, t.n3)):
        found.append(f"turns counts must be integers: {t}")
    elif min(t.n1, t.n2, t.n3) <= 0:
        found.append(f"non-positive turns count: {t}")
    elif t.n2 <= t.n3:
        found.append(f"degenerate winding factor: n2={t.n2} must exceed n3={t.n3}")
    load = spec.load
    value = load.ohms if load.ohms is not None else load.watts
    if not (math.isfinite(value) and value > 0):
        found.append(f"non-positive load: {load}")
    return found


def validate(spec: CircuitSpec) -> CircuitSpec:
    """Return ``spec`` unchanged if it is physically feasible.

    Raises :class:`SpecError` listing every violated invariant.  A Y-source
    input that is not the lower of the two voltages only warns.
    """
    found = violations(spec)
    if found:
        raise SpecError(found)
    if spec.vin1 >= spec.vin2:
        warnings.warn(
            f"vin1={spec.vin1} V is not below vin2={spec.vin2} V; the high-gain "
            "Y-source input is normally the lower-voltage source",
            SourceOrderWarning,
            stacklevel=2,
        )
    return spec
