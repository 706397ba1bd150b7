import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_robustness, brute_satisfied, random_depth, random_formula, random_signal
from stlcalib.errors import EvaluationError, FormulaSyntaxError, ParameterError
from stlcalib.stl import (
    Always,
    And,
    Eventually,
    Not,
    Or,
    Pred,
    parse_formula,
    pretty,
    robustness,
    score,
    stl1,
    stl2,
    stl3,
)


def test_parse_presets():
    assert parse_formula("F[1,END](sig > 0.7)") == Eventually(1, None, Pred("sig", ">", 0.7))
    assert parse_formula("G[2,END](delta >= -0.1)") == Always(2, None, Pred("delta", ">=", -0.1))
    assert parse_formula("  G [ 2 , END ] ( |delta|<=0.2 ) ") == Always(2, None, Pred("absdelta", "<=", 0.2))


def test_parse_connectives_left_associative():
    f = parse_formula("F[0,2](sig >= 0.5) and not G[1,END](sig > 0.1) or F[1,1](delta >= 0)")
    assert isinstance(f, Or)
    assert isinstance(f.left, And)
    assert isinstance(f.left.right, Not)


@pytest.mark.parametrize(
    "text, pos",
    [
        ("F[3,1](sig > 0.5)", 2),
        ("F[1,END](sig > x)", 15),
        ("F[1,END](sig < 0.5)", 13),
        ("F[1,END](sig > 0.5", 18),
        ("F[END,END](sig > 0.5)", 2),
        ("F[1.5,3](sig > 0.5)", 2),
        ("F[1,END](delta > 0.5)", 15),
        ("F[1,END](sig > 0.5) xor", 20),
        ("", 0),
        ("sig > 1e999", 6),
    ],
)
def test_syntax_errors_carry_position(text, pos):
    with pytest.raises(FormulaSyntaxError) as info:
        parse_formula(text)
    assert info.value.position == pos
    assert f"position {pos}" in str(info.value)


def test_expected_tokens_listed():
    with pytest.raises(FormulaSyntaxError) as info:
        parse_formula("F[1,END](")
    assert "'sig'" in info.value.expected


def test_preset_text():
    assert pretty(stl1(0.7)) == "F[1,END](sig > 0.7)"
    assert pretty(stl2(0.1)) == "G[2,END](delta >= -0.1)"
    assert pretty(stl3(0.2)) == "G[2,END](|delta| <= 0.2)"


def test_preset_ranges():
    with pytest.raises(ParameterError):
        stl1(1.5)
    with pytest.raises(ParameterError):
        stl2(-0.1)
    with pytest.raises(ParameterError):
        stl3(float("nan"))


@pytest.mark.parametrize(
    "formula, signal, expected",
    [
        (stl1(0.7), [0.2, 0.6, 0.9], 0.2),
        (stl2(0.1), [0.5, 0.45, 0.6], 0.05),
        (stl3(0.2), [0.5, 0.9], -0.2),
    ],
)
def test_worked_robustness(formula, signal, expected):
    rho = robustness(formula, signal)
    assert rho.value == pytest.approx(expected, abs=1e-12)
    assert rho.value == brute_robustness(formula, signal)
    assert rho.satisfied == (expected >= 0)


@given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 6))
def test_stl1_constant_signal(k, tau, n):
    assert robustness(stl1(tau), [k] * n).value == k - tau


def test_score_clamps():
    assert score(stl1(0.7), [0.2, 0.6, 0.9]) == pytest.approx(0.2)
    assert score(stl3(0.2), [0.5, 0.9]) == 0.0
    assert robustness(stl2(0.5), [0.0, 1.0]).value == 1.5
    assert score(stl2(0.5), [0.0, 1.0]) == 1.0


def test_delta_formula_on_single_sample():
    with pytest.raises(EvaluationError, match="no delta samples"):
        robustness(stl2(0.1), [0.5])
    assert robustness(stl1(0.3), [0.5]).value == pytest.approx(0.2)


def test_window_beyond_signal_is_error():
    with pytest.raises(EvaluationError):
        robustness(parse_formula("F[5,7](sig > 0.1)"), [0.5, 0.6])


def test_bare_predicate_at_root_is_error():
    with pytest.raises(EvaluationError):
        robustness(parse_formula("sig > 0.1"), [0.5])


def test_tie_counts_as_satisfied():
    assert robustness(stl1(0.5), [0.5]).satisfied


def test_window_bounds_are_clipped():
    f = parse_formula("G[1,2](sig > 0.1)")
    assert robustness(f, [0.5, 0.3, 0.0]).value == pytest.approx(0.2)
    nested = parse_formula("F[1,END](G[0,2](sig >= 0.4))")
    # at t=3 the inner window shrinks to the single sample 0.8
    assert robustness(nested, [0.1, 0.5, 0.8]).value == pytest.approx(0.4)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=500)
def test_oracle_equivalence(seed):
    rng = random.Random(seed)
    f = random_formula(rng, random_depth(rng))
    s = random_signal(rng)
    expected = brute_robustness(f, s)
    if expected is None:
        with pytest.raises(EvaluationError):
            robustness(f, s)
    else:
        assert robustness(f, s).value == expected


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=500)
def test_soundness(seed):
    rng = random.Random(seed)
    f = random_formula(rng, random_depth(rng))
    s = random_signal(rng)
    try:
        rho = robustness(f, s).value
    except EvaluationError:
        return
    if rho > 0:
        assert brute_satisfied(f, s) is True
    elif rho < 0:
        assert brute_satisfied(f, s) is False


@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.floats(0, 1), st.floats(0, 1))
def test_stl1_decreasing_in_tau(s, a, b):
    lo, hi = sorted([a, b])
    r_lo, r_hi = robustness(stl1(lo), s).value, robustness(stl1(hi), s).value
    assert r_lo - r_hi == pytest.approx(hi - lo, abs=1e-12)
    if hi - lo > 1e-9:
        assert r_hi < r_lo


@given(
    st.lists(st.floats(0.1, 0.9), min_size=2, max_size=8),
    st.floats(-0.1, 0.1),
    st.floats(0, 1),
)
def test_translation(s, b, k):
    shifted = [x + b for x in s]
    assert robustness(stl1(k), shifted).value == pytest.approx(robustness(stl1(k), s).value + b, abs=1e-12)
    for f in (stl2(k), stl3(k)):
        assert robustness(f, shifted).value == pytest.approx(robustness(f, s).value, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=300)
def test_score_in_unit_interval(seed):
    rng = random.Random(seed)
    f = random_formula(rng, 3)
    try:
        c = score(f, random_signal(rng))
    except EvaluationError:
        return
    assert 0.0 <= c <= 1.0


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=300)
def test_pretty_roundtrip(seed):
    rng = random.Random(seed)
    f = random_formula(rng, rng.randint(1, 4))
    assert parse_formula(pretty(f)) == f


def test_pretty_parenthesises_right_operand():
    a, b, c = (Eventually(1, None, Pred("sig", ">", x)) for x in (0.1, 0.2, 0.3))
    f = And(a, Or(b, c))
    assert "and (" in pretty(f)
    assert parse_formula(pretty(f)) == f
    g = Not(And(a, b))
    assert pretty(g).startswith("not (")
    assert parse_formula(pretty(g)) == g


def test_odd_constants_roundtrip():
    for k in (1e-05, -0.0, 123456789.0, 2.5e-10):
        f = Always(0, 3, Pred("delta", ">=", k))
        assert parse_formula(pretty(f)) == f


@given(st.text(max_size=40))
@settings(max_examples=500)
def test_parser_never_crashes(text):
    try:
        parse_formula(text)
    except FormulaSyntaxError as exc:
        assert 0 <= exc.position <= len(text)
