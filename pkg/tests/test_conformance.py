from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from splitsim.automata import builtin, builtin_diamond, builtin_octagon, builtin_square, ca_step
from splitsim.conformance import (A, LabelMapping, Range, builtin_mapping, check_config_in_mapping,
                                  cosimulate, figure8_table, mapping_sanity, rule_claims, rule_ledger,
                                  verify_rule_arithmetic)
from splitsim.engine import Evolution
from splitsim.lattice import SparseConfiguration, outer_boundary
from splitsim.numeric import ALWAYS_TRUE, AffineMass, HInterval, HSet


def test_mapping_examples():
    assert builtin_mapping("diamond", 2).ranges["u"] == Range(A(1))
    sq = builtin_mapping("square")
    assert sq.ranges["p"] == Range(A(F(1, 4), 1), A(1))
    assert sq.ranges["d"] == Range(A(4, -4), A(16, -20))
    octa = builtin_mapping("octagon")
    assert octa.ranges["c'"] == Range(A(1, F(1, 2)), A(60, -80))
    assert octa.ranges["q'"] == Range(A(F(7, 8), F(21, 16)), A(60, -80))
    assert octa.validity == HInterval(F(5, 7), F(13, 18))
    assert builtin_mapping("octagon", closed=True).validity.closed
    assert builtin_mapping("diamond", 3).validity == HInterval(F(5, 6), 1)
    with pytest.raises(ValueError):
        builtin_mapping("hexagon")


@pytest.mark.parametrize("which,d", [("diamond", 1), ("diamond", 2), ("diamond", 3), ("square", 2),
                                     ("octagon", 2)])
def test_mappings_are_sane_on_their_intervals(which, d):
    assert mapping_sanity(builtin_mapping(which, d)) == []


def test_sanity_flags_unstable_label_below_one():
    # 4 - 4h drops to 1 at h = 3/4, so m stops being unstable past it
    assert any(p.startswith("m:") for p in mapping_sanity(builtin_mapping("square"), HInterval(F(7, 10), F(4, 5))))


def test_initial_configuration_is_in_diamond_mapping():
    evo = Evolution(2, 3, HInterval(F(3, 4), 1))
    spec = builtin_diamond(2)
    dec, bad = check_config_in_mapping(evo.config, spec.initial_state(), builtin_mapping("diamond", 2),
                                       HInterval(F(3, 4), 1))
    assert dec == ALWAYS_TRUE and bad is None


def test_light_origin_violates_diamond_mapping():
    eta = SparseConfiguration(2, A(0, 1), {(0, 0): A(F(1, 2))})
    dec, bad = check_config_in_mapping(eta, builtin_diamond(2).initial_state(), builtin_mapping("diamond", 2),
                                       HInterval(F(3, 4), 1))
    assert dec != ALWAYS_TRUE and bad.site == (0, 0) and bad.label == "u"


def test_figure8_table_is_in_octagon_mapping():
    dec, bad = check_config_in_mapping(figure8_table(), builtin_octagon().initial_state(),
                                       builtin_mapping("octagon"), HInterval(F(5, 7), F(13, 18)))
    assert dec == ALWAYS_TRUE, bad


def test_figure8_table_matches_eight_steps():
    evo = Evolution(2, 3, HInterval(F(5, 7), F(13, 18)))
    for _ in range(8):
        evo.step()
    table = figure8_table()
    assert table[(0, 0)] == AffineMass(F(14592, 65536), F(96512, 65536))
    assert table[(1, 1)] == AffineMass(F(11700, 65536), F(98608, 65536))
    sites = set(table.explicit) | set(evo.config.explicit)
    assert all(evo.mass(x) == table[x] for x in sites)


def test_rule_examples():
    sq = builtin_mapping("square")
    claims = {c.ref: c for c in rule_claims("square")}
    assert verify_rule_arithmetic(sq, claims["bullet 9"]).validity == HSet(F(7, 10), F(14, 19), True, True)
    assert verify_rule_arithmetic(sq, claims["bullet 8"]).validity == HSet(F(13, 20), F(40, 57), True, True)
    octa = builtin_mapping("octagon")
    r13 = verify_rule_arithmetic(octa, {c.ref: c for c in rule_claims("octagon")}["rule 13"])
    assert r13.validity == HSet(None, F(21, 29), True, True)
    assert (r13.sum_lo, r13.sum_hi) == (A(1, 1), A(18, -22))


def test_ledgers():
    sq = rule_ledger("square")
    assert all(r.status == "pass" and r.covers for r in sq)
    octa = rule_ledger("octagon")
    bad = [r for r in octa if r.status != "pass"]
    assert [r.claim.ref for r in bad] == ["rule 9"]
    r9 = bad[0]
    assert (r9.sum_lo, r9.sum_hi) == (A(F(15, 32), F(85, 64)), A(16, -20))
    assert r9.validity == HSet(F(2, 5), 1, True, False)
    assert all(r.covers for r in octa)
    assert all(r.status == "pass" for d in (1, 2, 3) for r in rule_ledger("diamond", d))


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("n", [1, 3, 8])
def test_diamond_cosimulation(d, n):
    M = builtin_mapping("diamond", d)
    rep = cosimulate(builtin_diamond(d), M, d, n, M.validity, 30)
    assert rep.success and rep.bisections == [] and rep.horizon == 30


def test_square_and_octagon_cosimulation():
    rep = cosimulate(builtin_square(), builtin_mapping("square"), 2, A(5, -5), HInterval(F(7, 10), F(40, 57)), 40)
    assert rep.success and rep.bisections == []
    rep = cosimulate(builtin_octagon(), builtin_mapping("octagon"), 2, 3, HInterval(F(5, 7), F(13, 18)), 40,
                     time_offset=8)
    assert rep.success and rep.bisections == []


def test_cosimulation_outside_validity_reports_violation():
    M = builtin_mapping("diamond", 2)
    rep = cosimulate(builtin_diamond(2), M, 2, 3, HInterval(F(1, 2), F(3, 4)), 20)
    assert not rep.success
    J = rep.to_dict()
    assert J["success"] is False and J["parts"]


@pytest.mark.parametrize("name,d,n,I,offset,t_max", [
    ("diamond", 2, 3, HInterval(F(3, 4), 1), 0, 20),
    ("diamond", 2, 3, HInterval(F(1, 2), F(3, 4)), 0, 20),
    ("square", 2, A(5, -5), HInterval(F(7, 10), F(40, 57)), 0, 20),
    ("square", 2, A(5, -5), HInterval(F(3, 5), F(7, 10)), 0, 20),
    ("octagon", 2, 3, HInterval(F(5, 7), F(13, 18)), 8, 30),
    ("octagon", 2, 3, HInterval(F(13, 18), F(3, 4)), 8, 30),
])
def test_orbit_and_full_paths_agree(name, d, n, I, offset, t_max):
    spec = builtin(name, d)
    M = builtin_mapping(name, d)
    a = cosimulate(spec, M, d, n, I, t_max, offset, use_symmetry=True)
    b = cosimulate(spec, M, d, n, I, t_max, offset, use_symmetry=False)
    assert a.success == b.success
    assert [(p.interval, p.verdict, p.steps_checked) for p in a.parts] == \
           [(p.interval, p.verdict, p.steps_checked) for p in b.parts]


def _pointwise(spec, M: LabelMapping, d, n, h, t_max, offset):
    """Plain numeric check at one background value."""
    evo = Evolution(d, n(h) if isinstance(n, AffineMass) else n, h)
    for _ in range(offset):
        evo.step()
    xi = spec.initial_state()
    for t in range(t_max + 1):
        for x in set(evo.config.explicit) | set(xi.labels):
            r = M.ranges[xi[x]]
            m = evo.mass_at(x, h)
            lo = r.lo(h)
            if r.point:
                if m != lo:
                    return False
            elif m < lo or (r.hi is not None and m >= r.hi(h)):
                return False
        W = set(evo.toppled) | outer_boundary(set(evo.toppled))
        if t == 0 and not evo.toppled:
            W = set(evo.unstable_sites())
        if set(xi.labels) != W:
            return False
        if t == t_max:
            return True
        xi = ca_step(spec, xi)
        evo.step()


@settings(max_examples=40)
@given(st.sampled_from(["diamond", "square", "octagon"]), st.integers(0, 400))
def test_point_interval_matches_pointwise_run(name, k):
    lo, hi = {"diamond": (F(1, 2), F(99, 100)), "square": (F(13, 20), F(3, 4)),
              "octagon": (F(7, 10), F(3, 4))}[name]
    h = lo + (hi - lo) * F(k, 400)
    n, offset = {"diamond": (3, 0), "square": (A(5, -5), 0), "octagon": (3, 8)}[name]
    spec = builtin(name)
    M = builtin_mapping(name)
    rep = cosimulate(spec, M, 2, n, HInterval(h, h, True), 24, offset)
    assert rep.success == _pointwise(spec, M, 2, n, h, 24, offset)
