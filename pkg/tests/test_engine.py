from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from oracles import naive_run
from splitsim.engine import (BudgetExhausted, CertifiedExplosive, Evolution, IntervalSplit, InvalidParams,
                             Parallel, PreconditionUnmet, SingleSiteLexMin, SingleSiteRandom, Stabilized,
                             conservation_check, init, parity_check, parse_order, rectangle_check, run,
                             step, t_bound_check)
from splitsim.lattice import diamond_region, neighbors, outer_boundary, symmetry_images
from splitsim.numeric import AffineMass, HInterval


def line(evo, lo, hi):
    return [evo.mass_at((i,), 0) for i in range(lo, hi + 1)]


def stabilize(d, n, h, order=None, record=False, max_steps=10 ** 5):
    evo = Evolution(d, n, h, order, record=record)
    out = evo.run(max_steps, shortcut=False)
    assert isinstance(out, Stabilized)
    return evo


# ---- documented examples ----

def test_first_split_in_one_dimension():
    evo = init(1, 4, 0)
    step(evo)
    assert line(evo, -1, 1) == [2, 0, 2]
    assert evo.toppled == {(0,)}
    assert evo.odometer == {(0,): AffineMass(4)}


def test_parallel_golden_run():
    evo = Evolution(1, 4, 0)
    out = run(evo)
    assert isinstance(out, Stabilized) and evo.t == 5
    assert line(evo, -4, 4) == [0, F(1, 2), F(3, 4), F(3, 4), 0, F(3, 4), F(3, 4), F(1, 2), 0]
    assert evo.toppled == {(i,) for i in range(-2, 3)}


def test_leftmost_golden_run():
    evo = stabilize(1, 4, 0, SingleSiteLexMin())
    assert line(evo, -4, 4) == [0, F(1, 2), F(1, 2), F(7, 8), F(3, 4), 0, F(3, 4), F(5, 8), 0]


@pytest.mark.parametrize("n,h,half", [
    (F(165, 32), F(23, 64), 5), (F(167, 32), F(23, 64), 4),
    (F(343, 64), F(21, 64), 5), (F(343, 64), F(23, 64), 4)])
def test_non_monotone_examples(n, h, half):
    evo = stabilize(1, n, h)
    assert evo.toppled == {(i,) for i in range(-half, half + 1)}


def test_zero_source_is_stable():
    evo = Evolution(2, AffineMass(), F(1, 3))
    assert not evo.step()
    assert isinstance(evo.run(10), Stabilized) and evo.toppled == set()


def test_interval_run_initializes():
    evo = Evolution(2, 3, HInterval(F(5, 7), F(13, 18)))
    assert evo.mass((0, 0)) == AffineMass(3) and evo.mass((4, 1)) == AffineMass(0, 1)


def test_invalid_parameters():
    with pytest.raises(InvalidParams):
        Evolution(1, 3, 1)
    with pytest.raises(InvalidParams):
        Evolution(2, AffineMass(-1), F(1, 2))
    with pytest.raises(InvalidParams):
        Evolution(0, 3, 0)
    with pytest.raises(InvalidParams):
        Evolution(1, 3, 0).run(0)
    with pytest.raises(ValueError):
        parse_order("sideways")


def test_interval_split_leaves_state_untouched():
    # n=3 on [0, 1/2): the first step is uniform, then mass 3/4 + h decides at h=1/4
    evo = Evolution(2, 3, HInterval(0, F(1, 2)))
    evo.step()
    before = (evo.t, dict(evo.config.explicit), set(evo.toppled))
    with pytest.raises(IntervalSplit) as exc:
        evo.step()
    assert exc.value.crossing == F(1, 4)
    assert (evo.t, dict(evo.config.explicit), set(evo.toppled)) == before


def test_certified_explosive_shortcut():
    assert isinstance(Evolution(2, 2, F(3, 4)).run(10), CertifiedExplosive)
    assert isinstance(Evolution(2, 64, F(13, 19)).run(10), CertifiedExplosive)
    assert isinstance(Evolution(3, 6, F(7, 9)).run(10), CertifiedExplosive)
    # below the proven thresholds nothing is claimed
    assert isinstance(Evolution(2, 64, F(2, 3)).run(5), BudgetExhausted)


def test_budget_exhausted_carries_growth_series():
    out = Evolution(2, 8, F(13, 19)).run(30, shortcut=False)
    assert isinstance(out, BudgetExhausted)
    series = out.diagnostics["series"]
    assert len(series) == 30 and series[-1][1] >= series[0][1]
    out = Evolution(2, 8, F(13, 19)).run(1000, max_radius=5, shortcut=False)
    assert out.diagnostics["reason"] == "radius"


def test_parity_examples():
    assert parity_check(stabilize(1, 4, 0, record=True).history)
    evo = Evolution(2, 3, F(5, 7), record=True)
    for _ in range(30):
        evo.step()
    assert parity_check(evo.history)
    assert parity_check([])
    assert not parity_check([[(0, 0)], [(0, 0)]])


def test_t_bound_examples():
    assert t_bound_check(Stabilized(stabilize(1, 4, 0)), 4, 0)
    assert t_bound_check(Stabilized(stabilize(1, F(165, 32), F(23, 64))), F(165, 32), F(23, 64))
    assert t_bound_check(Stabilized(stabilize(2, 0, F(1, 4))), 0, F(1, 4))
    with pytest.raises(PreconditionUnmet):
        t_bound_check(Stabilized(stabilize(1, 0, F(1, 2))), 0, F(1, 2))


def test_rectangle_examples():
    assert rectangle_check(Stabilized(stabilize(2, F(1, 2), F(3, 5))), 2, F(3, 5))
    assert rectangle_check(Stabilized(stabilize(2, 8, F(3, 5))), 2, F(3, 5))
    with pytest.raises(PreconditionUnmet):
        rectangle_check(Stabilized(stabilize(2, 8, F(2, 5))), 2, F(2, 5))


def test_conservation_examples():
    evo = Evolution(2, 3, F(23, 32))
    assert conservation_check(evo)
    for _ in range(50):
        evo.step()
        assert conservation_check(evo)
    assert conservation_check(stabilize(1, 4, 0))


def test_trace_csv():
    evo = stabilize(1, 4, 0, record=True)
    rows = evo.trace_csv().splitlines()
    assert rows[0] == "t,|U_t|,|T_t|,total_mass_window"
    assert rows[1] == "0,,0,0/1+0/1*h"
    assert len(rows) == 2 + evo.t


# ---- randomized comparisons with the reference simulator ----

small_h = st.builds(F, st.integers(-16, 7), st.just(16))
small_n = st.builds(F, st.integers(0, 96), st.sampled_from([1, 2, 4, 8]))
orders = st.sampled_from(["parallel", "lexmin", "random:7"])


@settings(max_examples=200)
@given(st.sampled_from([1, 2]), small_n, small_h, orders)
def test_matches_reference_simulator(d, n, h, order_text):
    order = parse_order(order_text)
    evo = Evolution(d, n, h, order, record=True)
    out = evo.run(10 ** 5, shortcut=False)
    assert isinstance(out, Stabilized)
    if isinstance(order, SingleSiteRandom):
        # a different generator picks a different order; only the invariants must hold
        assert all(evo.mass_at(x, h) < 1 for x in evo.config.explicit)
        return
    mass, T, steps, schedule = naive_run(d, n, h, order_text)
    assert evo.toppled == T
    assert evo.t == steps
    assert [tuple(s) for s in evo.history] == schedule
    for x, m in mass.items():
        assert evo.mass_at(x, h) == m


@settings(max_examples=200)
@given(st.sampled_from([1, 2, 3]), small_n, small_h)
def test_parallel_run_invariants(d, n, h):
    """Parity, conservation, speed of light, instability locality and symmetry."""
    evo = Evolution(d, n, h, record=True)
    prev_unstable = evo.unstable_sites()
    while True:
        splitters = sorted(prev_unstable)
        if not evo.step():
            break
        assert conservation_check(evo)
        assert evo.toppled <= diamond_region(d, evo.t)
        now = evo.unstable_sites()
        touched = set(splitters) | outer_boundary(set(splitters))
        assert now <= (prev_unstable - set(splitters)) | touched
        prev_unstable = now
    assert parity_check(evo.history)
    cfg = evo.config.explicit
    for x, m in cfg.items():
        assert all(cfg.get(y) == m for y in symmetry_images(x))


@settings(max_examples=200)
@given(st.sampled_from([1, 2, 3]), small_n, st.builds(F, st.integers(0, 7), st.just(16)))
def test_size_bound_for_nonnegative_background(d, n, h):
    assert t_bound_check(Stabilized(stabilize(d, n, h)), n, h)


@settings(max_examples=200)
@given(st.sampled_from([1, 2, 3]), small_n, small_h)
def test_size_bound_with_origin_counted(d, n, h):
    assert t_bound_check(Stabilized(stabilize(d, n, h)), n, h, count_origin=True)


def test_size_bound_fails_for_negative_background():
    # |T| = 5 while n / (1/2 - h) = 104/21; (n - h) / (1/2 - h) = 39/7 still holds
    out = Stabilized(stabilize(1, F(13, 2), F(-13, 16)))
    assert len(out.final.toppled) == 5
    assert not t_bound_check(out, F(13, 2), F(-13, 16))
    assert t_bound_check(out, F(13, 2), F(-13, 16), count_origin=True)


@settings(max_examples=200)
@given(st.sampled_from([1, 2]), small_n, small_h, st.integers(0, 2 ** 32))
def test_random_order_grows_unstable_set_slowly(d, n, h, seed):
    evo = Evolution(d, n, h, SingleSiteRandom(seed))
    size = len(evo.unstable_sites())
    while evo.step():
        new = len(evo.unstable_sites())
        assert new <= size + 2 * d
        size = new


def test_random_order_is_reproducible():
    a = Evolution(2, 40, F(1, 4), SingleSiteRandom(99), record=True)
    b = Evolution(2, 40, F(1, 4), SingleSiteRandom(99), record=True)
    a.run(), b.run()
    assert a.history == b.history and a.config == b.config


@settings(max_examples=200)
@given(st.integers(2, 9), st.sampled_from([1, 2]))
def test_box_shape_above_threshold(n, d):
    h = 1 - F(1, d) + F(1, 20)
    evo = Evolution(d, n, h)
    out = evo.run(2000)
    if isinstance(out, Stabilized):
        assert rectangle_check(out, d, h)


@pytest.mark.parametrize("d,n,lo,hi", [(1, F(165, 32), F(23, 64), F(347, 960)), (2, 3, F(5, 7), F(13, 18)),
                                       (2, 9, F(1, 8), F(3, 16))])
def test_interval_run_replays_pointwise(d, n, lo, hi):
    """A run certified over [lo, hi) has the same split schedule at any h inside."""
    import random
    sym = Evolution(d, n, HInterval(lo, hi), record=True)
    for _ in range(40):
        if not sym.step():
            break
    rnd = random.Random(5)
    for _ in range(20):
        h = lo + (hi - lo) * F(rnd.randrange(1000), 1000)
        pt = Evolution(d, n, h, record=True)
        for _ in range(sym.t):
            pt.step()
        assert pt.history == sym.history
        for x in sym.config.explicit:
            assert pt.mass_at(x, h) == sym.mass(x)(h)


def test_odometer_identity_on_golden_run():
    evo = stabilize(1, 4, 0)
    u = evo.odometer
    for i in range(-3, 4):
        x = (i,)
        lap = sum(u.get(y, AffineMass())(0) for y in neighbors(x)) / 2 - u.get(x, AffineMass())(0)
        assert lap + (4 if i == 0 else 0) == evo.mass_at(x, 0)


def test_orders_print_their_names():
    assert str(Parallel()) == "parallel" and str(SingleSiteLexMin()) == "lexmin"
    assert str(parse_order("random:5")) == "random:5"
    assert parse_order("leftmost") == SingleSiteLexMin()
