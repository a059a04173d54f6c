"""Piecewise-linear circuit model of the double-input converter.

The circuit is described once as a netlist.  For every combination of switch
gates and diode conduction flags a modified-nodal system is solved with the
capacitor voltages and inductor currents treated as known sources, giving the
linear dynamics ``dx/dt = A x + B u + c`` of that configuration.

Netlist (node ``0`` is the common negative rail)::

    quasi Y-source half                          boost half
    vin1 - L1 - A ---+--- D1 ---> P              vin2 - L2 - X2 --- D3 ---> O
                     |            | W1 (dot P)                  |
                    C2 (A-0)      Y                            SW2 (X2-0)
                     |           / \\
                    C1 (A-C)   W2   W3 (dot Y on both)
                     |    C---/     \\---X --- D2 ---> O
                     +----C               |
                                         SW1 (X-0)
    output: Co || Rload between O and 0

The three windings share the star point ``Y``; the magnetizing inductance is
in parallel with W1.  In the ideal periodic steady state this network has the
gain ``1 / (1 - delta * d)`` with ``delta = (N1 + N2) / (N2 - N3)``.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .params import CircuitSpec
from .pwm import GatePair

STATE_NAMES = ("i_l1", "i_lm", "i_l2", "v_c1", "v_c2", "v_co")
I_L1, I_LM, I_L2, V_C1, V_C2, V_CO = range(6)
N_STATE = 6
N_INPUT = 2
DIODES = ("d1", "d2", "d3")

# Series resistance of the C1 branch.  D1-W1-W3-C1 closes a loop of capacitors
# and ideal windings; without some resistance the conducting configuration is
# an index-2 DAE.  Its dissipation is reported as conduction loss.
LOOP_RESISTANCE = 1e-3

_RANK_RTOL = 1e-10


class Topology(str, enum.Enum):
    MIC = "mic"
    YSOURCE = "ysource"
    BOOST = "boost"


class CircuitError(RuntimeError):
    pass


class NoConsistentConfiguration(CircuitError):
    def __init__(self, message: str, state=None):
        self.state = None if state is None else np.array(state, dtype=float)
        if state is not None:
            snap = ", ".join(f"{n}={v:.6g}" for n, v in zip(STATE_NAMES, self.state))
            message = f"{message} [{snap}]"
        super().__init__(message)


@dataclass(frozen=True)
class _Element:
    kind: str  # vsrc | cap | ind | res | sw | diode
    name: str
    a: str
    b: str
    value: float = 0.0  # C, L, R or forward drop
    series_r: float = 0.0
    index: int = -1  # state index, input index or gate index


@dataclass(frozen=True)
class Netlist:
    elements: tuple
    windings: tuple  # ((a, b, turns), ...) ; empty without the Y-source half
    diodes: tuple  # names of diodes present
    topology: Topology
    sources: tuple
    load_ohms: float

    def nodes(self) -> list[str]:
        seen = []
        for e in self.elements:
            for n in (e.a, e.b):
                if n != "0" and n not in seen:
                    seen.append(n)
        for a, b, _ in self.windings:
            for n in (a, b):
                if n != "0" and n not in seen:
                    seen.append(n)
        return seen

    def element(self, name: str) -> _Element:
        for e in self.elements:
            if e.name == name:
                return e
        raise KeyError(name)


def build_netlist(
    spec: CircuitSpec,
    topology: Topology | str = Topology.MIC,
    sources: tuple = (True, True),
    load_ohms: Optional[float] = None,
    vo_target: float = 48.0,
) -> Netlist:
    """Netlist of the requested topology.

    ``sources`` marks each input source connected (True) or open-circuited.
    An open source leaves its converter hardware in place, still switching.
    """
    topology = Topology(topology)
    r_load = spec.load_resistance(vo_target) if load_ohms is None else load_ohms
    els = []
    windings = ()
    diodes = []
    if topology in (Topology.MIC, Topology.YSOURCE):
        t = spec.turns
        if sources[0]:
            els.append(_Element("vsrc", "vin1", "s1", "0", index=0))
        els += [
            _Element("ind", "L1", "s1", "A", spec.l1, spec.r_src1 + spec.esr_l1, I_L1),
            _Element("cap", "C2", "A", "0", spec.c2, 0.0, V_C2),
            _Element("cap", "C1", "A", "C", spec.c1, LOOP_RESISTANCE, V_C1),
            _Element("diode", "d1", "A", "P", spec.v_diode),
            _Element("ind", "Lm", "P", "Y", spec.lm, spec.esr_lm, I_LM),
            _Element("sw", "sw1", "X", "0", index=0),
            _Element("diode", "d2", "X", "O", spec.v_diode),
        ]
        windings = (("P", "Y", t.n1), ("Y", "X", t.n2), ("Y", "C", t.n3))
        diodes += ["d1", "d2"]
    if topology in (Topology.MIC, Topology.BOOST):
        if sources[1]:
            els.append(_Element("vsrc", "vin2", "s2", "0", index=1))
        els += [
            _Element("ind", "L2", "s2", "X2", spec.l2, spec.r_src2 + spec.esr_l2, I_L2),
            _Element("sw", "sw2", "X2", "0", index=1),
            _Element("diode", "d3", "X2", "O", spec.v_diode),
        ]
        diodes.append("d3")
    els += [
        _Element("cap", "Co", "O", "0", spec.co, 0.0, V_CO),
        _Element("res", "Rload", "O", "0", r_load),
    ]
    return Netlist(tuple(els), windings, tuple(diodes), topology, tuple(sources), r_load)


class ConfigKey(tuple):
    """``(GatePair, (d1, d2, d3) conduction flags)``."""

    def __new__(cls, gates, diodes):
        return super().__new__(cls, (GatePair(bool(gates[0]), bool(gates[1])), tuple(bool(d) for d in diodes)))

    @property
    def gates(self) -> GatePair:
        return self[0]

    @property
    def diodes(self) -> tuple:
        return self[1]


@dataclass
class PiecewiseModel:
    """Linear dynamics of one switch/diode configuration.

    ``probes`` maps names such as ``"i:d1"`` (branch current) or ``"v:d3"``
    (terminal voltage a-b) to affine rows over ``[x, u, 1]``.
    """

    key: ConfigKey
    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    clamped: tuple  # state indices held at zero in this configuration
    probes: dict = field(repr=False, default_factory=dict)
    uid: int = -1

    def derivative(self, x, u) -> np.ndarray:
        return self.A @ x + self.B @ u + self.c

    def probe(self, name: str, x, u) -> np.ndarray:
        """Evaluate a probe for one state ``(6,)`` or many states ``(n, 6)``."""
        row = self.probes[name]
        return np.asarray(x) @ row[:N_STATE] + (row[N_STATE:N_STATE + N_INPUT] @ u + row[-1])


def _rank(m: np.ndarray) -> int:
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > _RANK_RTOL * s[0]))


class _Mna:
    """Modified nodal system ``M z = K [x; u; 1]`` for one configuration."""

    def __init__(self, net: Netlist, key: ConfigKey, clamped: frozenset):
        self.nodes = net.nodes()
        node_ix = {n: i for i, n in enumerate(self.nodes)}
        branches = []  # (element name, a, b)
        gates = key.gates
        diode_on = dict(zip(DIODES, key.diodes))
        for e in net.elements:
            if e.kind in ("vsrc", "cap"):
                branches.append(e)
            elif e.kind == "sw" and gates[e.index]:
                branches.append(e)
            elif e.kind == "diode" and diode_on[e.name]:
                branches.append(e)
            elif e.kind == "ind" and e.name in clamped:
                branches.append(e)
        nn, nb, nw = len(self.nodes), len(branches), len(net.windings)
        size = nn + nb + nw
        ncol = N_STATE + N_INPUT + 1
        M = np.zeros((size, size))
        K = np.zeros((size, ncol))

        def kcl(node, col, coef):
            if node != "0":
                M[node_ix[node], col] += coef

        def vdiff(row, a, b, coef=1.0):
            if a != "0":
                M[row, node_ix[a]] += coef
            if b != "0":
                M[row, node_ix[b]] -= coef

        for e in net.elements:
            if e.kind == "res":
                g = 1.0 / e.value
                for p, q in ((e.a, e.b), (e.b, e.a)):
                    if p != "0":
                        M[node_ix[p], node_ix[p]] += g
                        if q != "0":
                            M[node_ix[p], node_ix[q]] -= g
            elif e.kind == "ind" and e.name not in clamped:
                if e.a != "0":
                    K[node_ix[e.a], e.index] -= 1.0
                if e.b != "0":
                    K[node_ix[e.b], e.index] += 1.0

        self.branch_col = {}
        for j, e in enumerate(branches):
            col = nn + j
            self.branch_col[e.name] = col
            kcl(e.a, col, 1.0)
            kcl(e.b, col, -1.0)
            vdiff(col, e.a, e.b)
            if e.kind == "vsrc":
                K[col, N_STATE + e.index] = 1.0
            elif e.kind == "cap":
                M[col, col] -= e.series_r
                K[col, e.index] = 1.0
            elif e.kind == "diode":
                K[col, -1] = e.value
        if nw:
            n1 = net.windings[0][2]
            base = nn + nb
            for k, (a, b, turns) in enumerate(net.windings):
                col = base + k
                self.branch_col[f"W{k + 1}"] = col
                kcl(a, col, 1.0)
                kcl(b, col, -1.0)
            # ampere-turn balance of the ideal part
            for k, (_, _, turns) in enumerate(net.windings):
                M[base, base + k] = turns
            a1, b1, _ = net.windings[0]
            for k in (1, 2):
                a, b, turns = net.windings[k]
                vdiff(base + k, a, b)
                vdiff(base + k, a1, b1, -turns / n1)
        self.M, self.K = M, K
        self.node_ix = node_ix

    def voltage_row(self, sol: np.ndarray, a: str, b: str) -> np.ndarray:
        row = np.zeros(sol.shape[1])
        if a != "0":
            row += sol[self.node_ix[a]]
        if b != "0":
            row -= sol[self.node_ix[b]]
        return row


def assemble_model(
    net: Netlist,
    key: ConfigKey,
) -> Optional[PiecewiseModel]:
    """Dynamics of one configuration, or ``None`` if the configuration is
    structurally impossible (e.g. a closed switch shorting a conducting diode
    across the output capacitor).

    Inductors whose current has no closed path in this configuration are
    clamped: their current is held at zero and they act as a zero-volt branch.
    """
    key = ConfigKey(*key)
    present = set(net.diodes)
    for name, on in zip(DIODES, key.diodes):
        if on and name not in present:
            raise CircuitError(f"unknown configuration key {key}: diode {name} absent")
    inductors = [e for e in net.elements if e.kind == "ind"]
    mna = _Mna(net, key, frozenset())
    base_rank = _rank(mna.M)
    clamped = frozenset(
        e.name for e in inductors if _rank(np.column_stack([mna.M, mna.K[:, e.index]])) > base_rank
    )
    if clamped:
        mna = _Mna(net, key, clamped)
    if _rank(mna.M) < _rank(np.hstack([mna.M, mna.K])):
        return None
    sol = np.linalg.pinv(mna.M) @ mna.K  # rows: unknowns, cols: [x, u, 1]
    ncol = sol.shape[1]

    deriv = np.zeros((N_STATE, ncol))
    probes = {}
    for e in net.elements:
        if e.kind == "cap":
            i_row = sol[mna.branch_col[e.name]]
            deriv[e.index] = i_row / e.value
            probes[f"i:{e.name}"] = i_row
        elif e.kind == "ind":
            if e.name in clamped:
                continue
            v_row = mna.voltage_row(sol, e.a, e.b)
            v_row[e.index] -= e.series_r
            deriv[e.index] = v_row / e.value
        elif e.kind == "diode":
            if e.name in mna.branch_col:
                probes[f"i:{e.name}"] = sol[mna.branch_col[e.name]]
            else:
                probes[f"i:{e.name}"] = np.zeros(ncol)
            probes[f"v:{e.name}"] = mna.voltage_row(sol, e.a, e.b)
        elif e.kind == "sw":
            probes[f"v:{e.name}"] = mna.voltage_row(sol, e.a, e.b)
    for k in range(len(net.windings)):
        probes[f"i:W{k + 1}"] = sol[mna.branch_col[f"W{k + 1}"]]
        a, b, _ = net.windings[k]
        probes[f"v:W{k + 1}"] = mna.voltage_row(sol, a, b)
    clamped_ix = tuple(sorted(e.index for e in inductors if e.name in clamped))
    return PiecewiseModel(
        key=key,
        A=deriv[:, :N_STATE].copy(),
        B=deriv[:, N_STATE:N_STATE + N_INPUT].copy(),
        c=deriv[:, -1].copy(),
        clamped=clamped_ix,
        probes=probes,
    )


# Conduction tolerances used when deciding diode states.
CURRENT_TOL = 1e-7
VOLTAGE_TOL = 1e-7


class ModelSet:
    """Lazily assembled configurations of one netlist, with stable integer ids."""

    def __init__(self, net: Netlist):
        self.net = net
        self._by_key: dict = {}
        self.models: list[PiecewiseModel] = []
        present = set(net.diodes)
        self._diode_mask = tuple(d in present for d in DIODES)
        self._forward = {e.name: e.value for e in net.elements if e.kind == "diode"}

    def get(self, key) -> Optional[PiecewiseModel]:
        key = ConfigKey(*key)
        if key not in self._by_key:
            model = assemble_model(self.net, key)
            if model is not None:
                model.uid = len(self.models)
                self.models.append(model)
            self._by_key[key] = model
        return self._by_key[key]

    def candidates(self, gates: GatePair):
        names = [d for d, present in zip(DIODES, self._diode_mask) if present]
        for flags in itertools.product((False, True), repeat=len(names)):
            on = dict(zip(names, flags))
            yield ConfigKey(gates, tuple(on.get(d, False) for d in DIODES))

    def consistent(self, model: PiecewiseModel, x, u, strict: bool = True) -> bool:
        """Complementarity check of every diode in ``model`` at state ``x``.

        With ``strict`` a conducting diode at zero current must also have
        non-decreasing current, so a diode exactly at the conduction boundary
        is reported blocking when its current would go negative.
        """
        xdot = None
        for name, on in zip(DIODES, model.key.diodes):
            if name not in self._forward:
                continue
            if on:
                i = float(model.probe(f"i:{name}", x, u))
                if i < -CURRENT_TOL:
                    return False
                if strict and i <= CURRENT_TOL:
                    if xdot is None:
                        xdot = model.derivative(x, u)
                    row = model.probes[f"i:{name}"][:N_STATE]
                    if row @ xdot < 0:
                        return False
            else:
                v = float(model.probe(f"v:{name}", x, u))
                if v > self._forward[name] + VOLTAGE_TOL * max(1.0, abs(v)):
                    return False
        return True

    def violation_index(self, model: PiecewiseModel, xs: np.ndarray, u) -> int:
        """Index of the first state in ``xs`` (n, 6) that breaks diode consistency, or -1."""
        bad = np.zeros(len(xs), dtype=bool)
        for name, on in zip(DIODES, model.key.diodes):
            if name not in self._forward:
                continue
            if on:
                bad |= model.probe(f"i:{name}", xs, u) < -CURRENT_TOL
            else:
                v = model.probe(f"v:{name}", xs, u)
                bad |= v > self._forward[name] + VOLTAGE_TOL * np.maximum(1.0, np.abs(v))
        hits = np.flatnonzero(bad)
        return int(hits[0]) if hits.size else -1

    def resolve(self, x, u, gates: GatePair, previous=None):
        """Find the consistent diode configuration for ``x`` under ``gates``.

        Returns ``(model, x_clamped)`` where clamped inductor currents are
        zeroed.  Configurations that would discard a non-zero inductor current
        are tried only after every non-clamping configuration failed.
        """
        x = np.asarray(x, dtype=float)
        prev = tuple(previous) if previous is not None else (False,) * len(DIODES)
        ranked = []
        for key in self.candidates(gates):
            model = self.get(key)
            if model is None:
                continue
            lost = sum(abs(x[s]) > CURRENT_TOL for s in model.clamped)
            dist = sum(a != b for a, b in zip(key.diodes, prev))
            ranked.append((lost, dist, key.diodes, model))
        ranked.sort(key=lambda r: (r[0], r[1], r[2]))
        for _, _, _, model in ranked:
            xc = x.copy()
            xc[list(model.clamped)] = 0.0
            if self.consistent(model, xc, u):
                return model, xc
        raise NoConsistentConfiguration(
            f"no consistent diode configuration for gates {tuple(gates)}", x
        )


def resolve_diodes(models: ModelSet, x, gates: GatePair, u, previous=None) -> tuple:
    """Conduction flags ``(d1, d2, d3)`` consistent with state ``x``."""
    model, _ = models.resolve(x, u, gates, previous)
    return model.key.diodes
