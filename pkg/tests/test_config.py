from pathlib import Path

import pytest

from yboost import CircuitSpec, SpecError
from yboost.config import ConfigError, build, dump, load, parse_override

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_table_config_matches_defaults():
    rc = load(CONFIGS / "table1.toml")
    assert rc.spec == CircuitSpec()
    assert (rc.pwm.d1, rc.pwm.d2) == (0.15, 0.5)
    assert rc.loads == (2.5, 5.0, 10.0, 15.0, 20.0, 25.0)


def test_ideal_config_is_lossless():
    assert load(CONFIGS / "table1_ideal.toml").spec == CircuitSpec().idealized()


def test_missing_duties_come_from_target():
    rc = build({"vo_target": 60.0})
    assert rc.pwm.d2 == pytest.approx(0.6)
    assert rc.pwm.d1 == pytest.approx(0.8 / 5)


def test_unknown_key_rejected(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text("vin1 = 12.0\nbogus = 3\n")
    with pytest.raises(ConfigError, match=r"c.toml:2: unknown key 'bogus'"):
        load(f)


def test_violation_points_at_line(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text("vin1 = 12.0\nfsw = 0.0\n")
    with pytest.raises(SpecError, match=r"c.toml:2: non-positive frequency"):
        load(f)


def test_override_blamed_over_file(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text("n2 = 2\nn3 = 1\n")
    with pytest.raises(SpecError, match="--set n3: degenerate winding factor"):
        load(f, ["n3=2"])


def test_override_precedence(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text("d_boost = 0.4\nload = \"10 W\"\n")
    assert load(f, ["d_boost=0.6"]).pwm.d2 == 0.6
    assert load(f, ["d_boost=0.4"]) == load(f)


def test_parse_override():
    assert parse_override("load=25 W") == ("load", "25 W")
    assert parse_override("n3 = 2") == ("n3", 2)
    assert parse_override("loads=[1, 2.5]") == ("loads", [1, 2.5])
    with pytest.raises(ConfigError):
        parse_override("novalue")


def test_type_errors():
    with pytest.raises(ConfigError, match="integer"):
        build({"n1": 2.5})
    with pytest.raises(ConfigError, match="number"):
        build({"lm": "big"})
    with pytest.raises(ConfigError, match="true or false"):
        build({"source1": 1})


def test_dump_round_trips(tmp_path):
    spec = CircuitSpec(lm=3e-3)
    f = tmp_path / "c.toml"
    f.write_text(dump(spec, d_st=0.1, d_boost=0.4))
    rc = load(f)
    assert rc.spec == spec and (rc.pwm.d1, rc.pwm.d2) == (0.1, 0.4)
