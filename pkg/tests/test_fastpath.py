from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from splitsim.engine import Evolution, Stabilized
from splitsim.fastpath import Uncertified, certified_run


def exact(d, n, h):
    evo = Evolution(d, n, h)
    assert isinstance(evo.run(10 ** 6, shortcut=False), Stabilized)
    return evo


def assert_agrees(run, evo, h):
    assert run.stabilized
    assert run.toppled == evo.toppled
    assert run.steps == evo.t
    sites = set(evo.toppled)
    for x in evo.toppled:
        sites.update((x[:i] + (x[i] + s,) + x[i + 1:]) for i in range(len(x)) for s in (-1, 1))
    for x in sites:
        err = F(float(run.error[tuple(c + run.radius for c in x)]))
        assert abs(F(run.mass_at(x)) - evo.mass_at(x, h)) <= err


@pytest.mark.parametrize("d,n,h", [(2, 1000, -1), (2, 1000, F(1, 4)), (1, 100, F(-1, 3)), (2, 300, F(3, 5)),
                                   (1, 60, F(3, 7))])
def test_matches_exact_engine(d, n, h):
    assert_agrees(certified_run(d, n, h), exact(d, n, h), F(h))


@settings(max_examples=200)
@given(st.sampled_from([1, 2]), st.builds(F, st.integers(1, 360), st.sampled_from([3, 7])),
       st.builds(F, st.integers(-20, 7), st.just(20)))
def test_matches_exact_engine_random(d, n, h):
    try:
        run = certified_run(d, n, h, radius=4)
    except Uncertified:
        # a decision too close to call is not a wrong answer
        return
    assert_agrees(run, exact(d, n, h), h)


def test_grows_arrays_from_small_start():
    run = certified_run(2, 5000, -1, radius=4)
    assert run.stabilized and run.radius > 4
    assert run.toppled == certified_run(2, 5000, -1, radius=64).toppled


def test_exact_ties_are_not_certified():
    # the first neighbour receives 2/3 + 1/3, exactly 1, which no float error bound can settle
    evo = Evolution(1, F(4, 3), F(1, 3))
    evo.step()
    assert evo.mass_at((-1,), F(1, 3)) == 1
    with pytest.raises(Uncertified):
        certified_run(1, F(4, 3), F(1, 3))
    assert certified_run(1, 2, 0).stabilized


def test_budget_and_arguments():
    run = certified_run(2, 64, F(13, 19), max_steps=20)
    assert not run.stabilized and run.steps == 20
    with pytest.raises(ValueError):
        certified_run(3, 10, 0)
    with pytest.raises(ValueError):
        certified_run(2, 10, 1)
