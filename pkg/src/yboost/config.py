"""Flat TOML run configuration.

Every key is either a :class:`CircuitSpec` field (``n1``/``n2``/``n3`` for the
turns ratio, ``load`` as ``"25 W"`` or ``"92.16 ohm"``) or one of the run keys
below.  Unknown keys are rejected.  ``--set key=value`` overrides are parsed
as TOML values and fall back to a bare string.
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .averaged import design_operating_point
from .params import SPEC_KEYS, CircuitSpec, SpecError, violations
from .pwm import PwmConfig

DEFAULT_LOADS = (2.5, 5.0, 10.0, 15.0, 20.0, 25.0)

RUN_KEYS = {
    "d_st": None,  # None: derived from vo_target
    "d_boost": None,
    "vo_target": 48.0,
    "loads": list(DEFAULT_LOADS),
    "samples_per_period": 500,
    "source1": True,  # False leaves the Y-source input open
    "source2": True,
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    spec: CircuitSpec
    pwm: PwmConfig
    vo_target: float
    loads: tuple
    samples_per_period: int
    sources: tuple = (True, True)
    origin: dict = field(default_factory=dict, compare=False)  # key -> "file:line" or "--set"


def _locate(text: str, key: str, path: str) -> str:
    m = re.search(rf"^\s*{re.escape(key)}\s*=", text, flags=re.MULTILINE)
    if m is None:
        return path
    return f"{path}:{text.count(chr(10), 0, m.start()) + 1}"


def parse_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = (s.strip() for s in item.split("=", 1))
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def read_file(path: str | Path) -> tuple[dict, dict]:
    """Values and their ``file:line`` origins."""
    path = str(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return data, {k: _locate(text, k, path) for k in data}


def load(path: Optional[str | Path] = None, overrides: Sequence[str] = ()) -> RunConfig:
    data, origin = ({}, {}) if path is None else read_file(path)
    for item in overrides:
        key, value = parse_override(item)
        data[key] = value
        origin[key] = f"--set {key}"
    return build(data, origin)


def build(data: dict, origin: Optional[dict] = None) -> RunConfig:
    origin = dict(origin or {})
    where = lambda k: origin.get(k, k)  # noqa: E731
    unknown = sorted(set(data) - set(SPEC_KEYS) - set(RUN_KEYS))
    if unknown:
        raise ConfigError("; ".join(f"{where(k)}: unknown key {k!r}" for k in unknown))

    spec_changes = {k: v for k, v in data.items() if k in SPEC_KEYS}
    for k, v in spec_changes.items():
        if k in ("n1", "n2", "n3"):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{where(k)}: {k} must be an integer, got {v!r}")
        elif k != "load" and (isinstance(v, bool) or not isinstance(v, (int, float))):
            raise ConfigError(f"{where(k)}: {k} must be a number, got {v!r}")
        elif k != "load":
            spec_changes[k] = float(v)
    try:
        spec = CircuitSpec().with_(**spec_changes)
    except ValueError as exc:
        raise ConfigError(f"{where('load')}: {exc}") from exc
    found = violations(spec)
    if found:
        raise SpecError([_attach(msg, where) for msg in found])

    run = {**RUN_KEYS, **{k: v for k, v in data.items() if k in RUN_KEYS}}
    vo_target = _number(run["vo_target"], "vo_target", where)
    if run["d_st"] is None or run["d_boost"] is None:
        op = design_operating_point(spec, vo_target)
        run["d_st"] = op.d_st if run["d_st"] is None else run["d_st"]
        run["d_boost"] = op.d_boost if run["d_boost"] is None else run["d_boost"]
    try:
        pwm = PwmConfig(spec.fsw, _number(run["d_st"], "d_st", where), _number(run["d_boost"], "d_boost", where))
    except ValueError as exc:
        raise ConfigError(f"{where('d_st')}: {exc}") from exc
    loads = run["loads"]
    if not isinstance(loads, (list, tuple)):
        raise ConfigError(f"{where('loads')}: loads must be a list of watts")
    loads = tuple(_number(p, "loads", where) for p in loads)
    spp = run["samples_per_period"]
    if isinstance(spp, bool) or not isinstance(spp, int):
        raise ConfigError(f"{where('samples_per_period')}: must be an integer, got {spp!r}")
    sources = tuple(run[k] for k in ("source1", "source2"))
    if any(not isinstance(s, bool) for s in sources):
        raise ConfigError(f"{where('source1')}: source1/source2 must be true or false")
    return RunConfig(spec, pwm, vo_target, loads, spp, sources, origin)


def _number(v, key, where) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where(key)}: {key} must be a finite number, got {v!r}")
    return float(v)


def _attach(msg: str, where) -> str:
    """Prefix a violation with the location of the key it names."""
    keys = [k for k in SPEC_KEYS if re.search(rf"\b{re.escape(k)}\b", msg)]
    if not keys and ("winding factor" in msg or "turns" in msg):
        keys = ["n1", "n2", "n3"]
    # an override is the likelier culprit than the file
    keys.sort(key=lambda k: not str(where(k)).startswith("--set"))
    return f"{where(keys[0])}: {msg}" if keys else msg


def dump(spec: CircuitSpec, **run) -> str:
    """TOML text for ``spec`` plus run keys (round-trips through :func:`load`)."""
    lines = []
    for k, v in {**spec.as_flat_dict(), **run}.items():
        lines.append(f"{k} = {_toml_value(v)}")
    return "\n".join(lines) + "\n"


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)
