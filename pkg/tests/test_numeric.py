import math
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from splitsim.numeric import (ALWAYS_FALSE, ALWAYS_TRUE, AffineMass, DegenerateInterval, HInterval, Mixed,
                              ParseError, affine_add, affine_eval, affine_in_halfopen_over_interval,
                              affine_scale_split, decide_ge_one_over_interval, format_fraction,
                              membership_set, parse_fraction, solve_nonneg)

fracs = st.builds(F, st.integers(-512, 512), st.integers(1, 64))
masses = st.builds(AffineMass, fracs, fracs)


def canonical(q):
    return math.gcd(q.numerator, q.denominator) == 1 and q.denominator > 0


@st.composite
def intervals(draw):
    a = draw(st.integers(-100, 48))
    b = draw(st.integers(a + 1, 50))
    return HInterval(F(a, 50), F(b, 50))


def test_add_examples():
    assert affine_add(AffineMass(F(3, 4), 0), AffineMass(0, 1)) == AffineMass(F(3, 4), 1)
    x = AffineMass(F(5, 3), F(-2, 7))
    assert affine_add(AffineMass(), x) == x
    s = affine_add(AffineMass(F(111, 65536), F(88388, 65536)), AffineMass(F(675, 65536), F(128772, 65536)))
    assert s == AffineMass(F(393, 32768), F(27145, 8192))


def test_split_share_examples():
    assert affine_scale_split(AffineMass(4, 0), 1) == AffineMass(2, 0)
    assert affine_scale_split(AffineMass(), 3) == AffineMass()
    assert affine_scale_split(AffineMass(3, 0), 2) == AffineMass(F(3, 4), 0)
    assert affine_scale_split(AffineMass(1, 0), 3) == AffineMass(F(1, 6), 0)


def test_eval_examples():
    assert affine_eval(AffineMass(F(14592, 65536), F(96512, 65536)), F(23, 32)) == F(10495, 8192)
    assert affine_eval(AffineMass(F(7, 3), 0), F(-5, 2)) == F(7, 3)
    assert affine_eval(AffineMass(0, 1), F(5, 7)) == F(5, 7)


def test_decide_examples():
    assert decide_ge_one_over_interval(AffineMass(F(3, 4), F(1, 4)), HInterval(F(3, 4), 1)) == ALWAYS_FALSE
    assert decide_ge_one_over_interval(AffineMass(1, 0), HInterval(F(-3), F(1, 2))) == ALWAYS_TRUE
    assert decide_ge_one_over_interval(AffineMass(F(1, 4), 1), HInterval(F(1, 2), 1)) == Mixed(F(3, 4))


def test_membership_examples():
    I = HInterval(F(7, 10), F(40, 57))
    h = AffineMass(0, 1)
    assert affine_in_halfopen_over_interval(h, h, h, I) == ALWAYS_TRUE
    assert affine_in_halfopen_over_interval(AffineMass(1), AffineMass(1), AffineMass(4, -4), I) == ALWAYS_TRUE
    J = HInterval(F(7, 10), F(3, 4))
    assert affine_in_halfopen_over_interval(AffineMass(2), AffineMass(1), AffineMass(4, -4), J) == ALWAYS_FALSE


def test_membership_degenerate_range():
    with pytest.raises(DegenerateInterval):
        affine_in_halfopen_over_interval(AffineMass(1), AffineMass(1), AffineMass(4, -4), HInterval(F(7, 10), 1))


def test_membership_mixed_reports_crossing():
    dec = affine_in_halfopen_over_interval(AffineMass(F(1, 2), 1), AffineMass(1), None, HInterval(0, 1))
    assert dec == Mixed(F(1, 2))


@settings(max_examples=200)
@given(masses, masses, st.randoms(use_true_random=False))
def test_add_commutes_with_eval(x, y, rnd):
    s = affine_add(x, y)
    assert canonical(s.a) and canonical(s.b)
    for _ in range(100):
        h = F(rnd.randrange(-4096, 4096), rnd.randrange(1, 512))
        assert affine_eval(s, h) == affine_eval(x, h) + affine_eval(y, h)


@settings(max_examples=200)
@given(masses, intervals(), st.randoms(use_true_random=False))
def test_decision_agrees_with_pointwise(x, I, rnd):
    dec = decide_ge_one_over_interval(x, I)
    width = I.hi - I.lo
    samples = [I.lo + width * F(rnd.randrange(1000), 1000) for _ in range(100)]
    vals = [x(h) >= 1 for h in samples]
    if dec == ALWAYS_TRUE:
        assert all(vals)
    elif dec == ALWAYS_FALSE:
        assert not any(vals)
    else:
        c = dec.crossing
        assert I.lo < c < I.hi or (I.lo <= c <= I.hi)
        below = [x(h) >= 1 for h in samples if h < c]
        above = [x(h) >= 1 for h in samples if h > c]
        if below and above:
            assert len(set(below)) == 1 and len(set(above)) == 1 and below[0] != above[0]


@settings(max_examples=200)
@given(masses, masses, masses, intervals(), st.randoms(use_true_random=False))
def test_membership_agrees_with_pointwise(x, lo, hi, I, rnd):
    try:
        dec = affine_in_halfopen_over_interval(x, lo, hi, I)
    except DegenerateInterval:
        assert any(hi(h) < lo(h) for h in (I.lo, I.hi))
        return
    samples = [I.lo + (I.hi - I.lo) * F(rnd.randrange(1000), 1000) for _ in range(50)]
    if lo == hi:
        # equal ends encode the single value lo(h)
        inside = [x(h) == lo(h) for h in samples]
    else:
        inside = [lo(h) <= x(h) < hi(h) for h in samples]
    if dec == ALWAYS_TRUE:
        assert all(inside)
    elif dec == ALWAYS_FALSE:
        assert not any(inside)


@settings(max_examples=200)
@given(masses)
def test_text_form_round_trip(x):
    assert AffineMass.parse(str(x)) == x
    assert AffineMass.parse(x.compact()) == x


def test_text_forms():
    assert str(AffineMass(F(3, 4), F(1, 4))) == "3/4 + 1/4*h"
    assert AffineMass.parse("3 + 0*h") == AffineMass(3, 0)
    assert AffineMass.parse("5-5*h") == AffineMass(5, -5)
    assert AffineMass.parse("h") == AffineMass(0, 1)
    assert format_fraction(F(2)) == "2/1"
    with pytest.raises(ParseError):
        parse_fraction("3/0")
    with pytest.raises(ParseError):
        AffineMass.parse("3 + h^2")


def test_interval_parsing():
    I = HInterval.parse("[5/7, 13/18)")
    assert (I.lo, I.hi, I.closed) == (F(5, 7), F(13, 18), False)
    assert HInterval.parse("[5/7,13/18]").closed
    assert HInterval.parse("3/4").is_point
    assert F(13, 18) not in I and F(5, 7) in I
    with pytest.raises(ParseError):
        HInterval.parse("[1/2,1/3)")


def test_solution_sets():
    s = solve_nonneg(AffineMass(4, -4) - AffineMass(1))
    assert s.hi == F(3, 4) and s.hi_closed and s.lo is None
    m = membership_set(AffineMass(F(1, 2), 1), AffineMass(1), AffineMass(4, -4))
    assert (m.lo, m.hi, m.lo_closed, m.hi_closed) == (F(1, 2), F(7, 10), True, False)
