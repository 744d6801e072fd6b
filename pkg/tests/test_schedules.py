import pytest
from hypothesis import given
from hypothesis import strategies as st

from kavg.errors import ConfigError
from kavg.schedules import (Constant, PowerLaw, StepDecay, Table, as_schedule, schedule_to_dict,
                            validate)


def test_constant():
    s = Constant(0.1)
    assert s.gamma(1) == s.gamma(1000) == 0.1
    assert Constant(16).batch(7) == 16


def test_power_law():
    assert PowerLaw(1, 1).gamma(4) == 0.25
    assert [PowerLaw(1, 0.3).batch(j) for j in (1, 2, 10)] == [1, 2, 2]
    # exact integer powers are not bumped by roundoff
    assert PowerLaw(1, 1 / 3).batch(8) == 2
    assert PowerLaw(1, 0.5).batch(16) == 4


def test_step_decay_halving():
    s = StepDecay(0.1, 0.5, 50)
    assert s.gamma(1) == s.gamma(50) == 0.1
    assert s.gamma(51) == 0.05
    assert s.gamma(101) == 0.025


def test_table():
    t = Table((0.3, 0.2))
    assert t.gamma(2) == 0.2 and t.batch(1) == 1
    with pytest.raises(IndexError):
        t.gamma(3)
    with pytest.raises(ConfigError):
        Table(())


@pytest.mark.parametrize("text,expected", [
    ("const:0.1", Constant(0.1)),
    ("power:1,0.5", PowerLaw(1, 0.5)),
    ("table:1,0.5", Table((1.0, 0.5))),
    ("step:0.1,0.5,50", StepDecay(0.1, 0.5, 50)),
    (0.2, Constant(0.2)),
])
def test_parse(text, expected):
    assert as_schedule(text) == expected


@pytest.mark.parametrize("bad", ["power:1", "wave:1", "step:1,2", True, None, {"kind": "x"}])
def test_parse_errors(bad):
    with pytest.raises(ConfigError):
        as_schedule(bad)


@given(st.sampled_from([Constant(0.3), PowerLaw(2, 0.7), Table((1.0, 2.0)), StepDecay(1, 0.5, 3)]))
def test_dict_roundtrip(s):
    assert as_schedule(schedule_to_dict(s)) == s


def test_validate():
    validate(PowerLaw(1, 1), 100, "gamma")
    with pytest.raises(ConfigError):
        validate(Constant(0), 3, "gamma")
    validate(Constant(0), 3, "gamma", allow_zero=True)
    with pytest.raises(ConfigError):
        validate(Constant(0), 3, "batch")
    with pytest.raises(ConfigError):
        validate(Table((0.1, -0.1)), 2, "gamma")


@given(st.floats(0.01, 10), st.floats(0, 2), st.integers(1, 10_000))
def test_power_batches_are_positive_ints(c, p, j):
    b = PowerLaw(c, p).batch(j)
    assert isinstance(b, int) and b >= 1
    assert b >= c * j**p - 1e-6
