import warnings

import pytest
from hypothesis import given
from hypothesis import strategies as st

from yboost import CircuitSpec, Load, SourceOrderWarning, SpecError, TurnsRatio, delta_from_turns, validate


@pytest.mark.parametrize("turns, delta", [((3, 2, 1), 5.0), ((1, 2, 1), 3.0), ((2, 3, 1), 2.5)])
def test_delta_examples(turns, delta):
    assert delta_from_turns(TurnsRatio(*turns)) == delta


def test_delta_degenerate():
    with pytest.raises(SpecError, match="degenerate winding factor"):
        delta_from_turns(TurnsRatio(3, 2, 2))


def test_table_values_validate():
    spec = CircuitSpec(
        vin1=12, vin2=24, l1=1e-3, l2=1e-3, c1=470e-6, c2=150e-6, co=470e-6,
        turns=TurnsRatio(3, 2, 1), fsw=20e3,
    )
    assert validate(spec) is spec


def test_validate_names_each_violation():
    spec = CircuitSpec(turns=TurnsRatio(1, 2, 2), fsw=0.0, co=-1.0)
    with pytest.raises(SpecError) as err:
        validate(spec)
    text = " | ".join(err.value.violations)
    assert len(err.value.violations) == 3
    assert "degenerate winding factor" in text
    assert "non-positive frequency" in text
    assert "non-positive co" in text


def test_source_order_only_warns():
    with pytest.warns(SourceOrderWarning):
        validate(CircuitSpec(vin1=24, vin2=12))


def test_load_parse():
    assert Load.parse("25 W") == Load(watts=25.0)
    assert Load.parse("92.16 ohm") == Load(ohms=92.16)
    assert Load.parse(10) == Load(ohms=10.0)
    assert Load(watts=25.0).resistance(48.0) == pytest.approx(92.16)
    with pytest.raises(ValueError):
        Load()


counts = st.integers(1, 40)


@given(counts, counts, st.integers(1, 40), st.integers(1, 50))
def test_delta_scale_invariant(n1, n3, gap, k):
    n2 = n3 + gap
    expected = delta_from_turns(TurnsRatio(n1, n2, n3))
    assert delta_from_turns(TurnsRatio(k * n1, k * n2, k * n3)) == pytest.approx(expected, rel=1e-15)


@given(
    st.floats(1, 100), st.floats(1, 100), st.floats(1e-6, 1), st.floats(1e3, 1e6),
    st.floats(0, 1), st.floats(0, 10),
)
def test_validate_idempotent(vin1, vin2, lm, fsw, esr, p_gate):
    spec = CircuitSpec(vin1=vin1, vin2=vin2, lm=lm, fsw=fsw, esr_l1=esr, p_gate=p_gate)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SourceOrderWarning)
        once = validate(spec)
        assert validate(once) == once == spec
