from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splitsim.automata import CAState, builtin_octagon, ca_run
from splitsim.conformance import figure8_table
from splitsim.engine import Evolution, SingleSiteRandom
from splitsim.numeric import AffineMass, HInterval, ParseError
from splitsim.render import (CA_PALETTE, DARK_BLUE, UnsupportedDimension, ca_image, mass_color, mass_image,
                             ppm_bytes, read_ppm, snapshot_values, upscale, write_ppm)
from splitsim.snapshot import Snapshot, label_grid, load_snapshot, save_snapshot


def _run_state(d, n, h, steps, order=None):
    evo = Evolution(d, n, h, order)
    for _ in range(steps):
        if not evo.step():
            break
    return evo


@settings(max_examples=100)
@given(st.sampled_from([1, 2, 3]), st.builds(F, st.integers(0, 40), st.integers(1, 6)),
       st.builds(F, st.integers(-8, 9), st.just(12)), st.integers(0, 12),
       st.sampled_from([None, "random"]), st.integers(0, 10 ** 6))
def test_snapshot_round_trip_is_byte_identical(d, n, h, steps, order, seed):
    evo = _run_state(d, n, h, steps, SingleSiteRandom(seed) if order else None)
    text = Snapshot.from_evolution(evo).dumps()
    back = Snapshot.loads(text)
    assert back.dumps() == text
    assert back.masses == evo.config.explicit
    assert (back.d, back.t, back.n) == (d, evo.t, evo.n)


def test_interval_snapshot_and_files(tmp_path):
    evo = _run_state(2, 3, HInterval(F(5, 7), F(13, 18)), 8)
    snap = Snapshot.from_evolution(evo)
    path = tmp_path / "s.snap"
    save_snapshot(snap, path)
    back = load_snapshot(path)
    assert path.read_text() == back.dumps()
    assert back.h == HInterval(F(5, 7), F(13, 18))
    table = figure8_table()
    assert all(back.mass(x) == table[x] for x in table.explicit)
    assert snap.dumps().splitlines()[:4] == ["SPLITSIM 1", "d=2 t=8 order=parallel", "h=[5/7,13/18)",
                                            "n=3/1+0/1*h"]


def test_header_only_snapshot():
    snap = Snapshot(2, 0, "parallel", HInterval.parse("1/3"), AffineMass())
    text = snap.dumps()
    assert len(text.splitlines()) == 4
    assert Snapshot.loads(text).masses == {}


@pytest.mark.parametrize("text,line", [
    ("SPLITSIM 1\nd=1 t=0 order=parallel\nh=0/1\nn=1/1+0/1*h\n0 | 3/0 | 0/1\n", 5),
    ("SPLITSIM 2\n", 1),
    ("SPLITSIM 1\nd=1 t=0 order=parallel\nh=0/1\nn=1/1+0/1*h\n0 1 | 1/1 | 0/1\n", 5),
    ("SPLITSIM 1\nd=1 t=0 order=parallel\nh=0/1\nn=1/1+0/1*h\n0 | 1/1 | 0/1\n0 | 1/2 | 0/1\n", 6),
    ("SPLITSIM 1\nd=x t=0 order=parallel\nh=0/1\nn=1\n", 2),
    ("SPLITSIM 1\nd=1 t=0 order=parallel\nh=[1/2,1/3)\nn=1\n", 3),
])
def test_snapshot_parse_errors(text, line):
    with pytest.raises(ParseError) as exc:
        Snapshot.loads(text)
    assert exc.value.line == line


def test_pointwise_render_matches_symbolic():
    sym = _run_state(2, 3, HInterval(F(5, 7), F(13, 18)), 20)
    snap = Snapshot.from_evolution(sym)
    for h in (F(5, 7), F(18, 25), F(13, 18) - F(1, 1000)):
        pt = _run_state(2, 3, h, 20)
        a = mass_image(snapshot_values(snap, h), h, 2, radius=24)
        b = mass_image({x: pt.mass_at(x, h) for x in pt.config.explicit}, h, 2, radius=24)
        assert np.array_equal(a, b)


def test_all_background_is_dark_blue():
    img = mass_image({}, F(1, 3), 2, radius=5)
    assert img.shape == (11, 11, 3)
    assert (img == DARK_BLUE).all()
    strip = mass_image({}, F(1, 3), 1, radius=5)
    assert strip.shape == (1, 11, 3) and (strip == DARK_BLUE).all()


def test_mass_palette():
    h = F(1, 3)
    assert mass_color(h, h) == DARK_BLUE
    assert mass_color(F(0), h) == (0, 0, 0)
    assert mass_color(F(1), h) == (184, 134, 11)
    assert mass_color(F(3, 2), h) == (255, 140, 0)
    assert mass_color(F(5), h) == (220, 0, 0)
    lo, hi = mass_color(F(1, 10), h), mass_color(F(9, 10), h)
    assert lo[2] > lo[0] and hi[0] > hi[2]


def test_render_rejects_three_dimensions():
    with pytest.raises(UnsupportedDimension):
        mass_image({(0, 0, 0): F(1)}, 0, 3)
    with pytest.raises(UnsupportedDimension):
        ca_image(CAState(3))


def test_ca_palette_and_grid():
    spec = builtin_octagon()
    state = ca_run(spec, spec.initial_state(), 5)
    img = ca_image(state, radius=12)
    assert tuple(img[12, 12]) == CA_PALETTE[state[(0, 0)]]
    assert tuple(img[0, 0]) == CA_PALETTE["h"]
    assert CA_PALETTE["e"] == (0, 0, 0) and CA_PALETTE["h"] == DARK_BLUE
    grid = label_grid(state, 12).splitlines()
    assert grid[0] == f"# t=5 radius=12" and len(grid) == 26
    assert grid[13].split()[12] == state[(0, 0)]
    assert grid[1].split() == [state[(x, 12)] for x in range(-12, 13)]


def test_ppm_round_trip(tmp_path):
    img = upscale(mass_image({(0, 0): F(1), (1, 0): F(0)}, F(1, 3), 2, radius=3), 4)
    assert img.shape == (28, 28, 3)
    path = tmp_path / "a.ppm"
    write_ppm(img, path)
    assert np.array_equal(read_ppm(path), img)
    assert ppm_bytes(img).startswith(b"P6\n28 28\n255\n")
