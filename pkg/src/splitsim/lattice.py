"""Sites of Z^d, sparse configurations over a uniform background, and named regions."""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Iterator, List, Set, Tuple

from .numeric import AffineMass, H

Site = Tuple[int, ...]
Region = Set[Site]


def origin(d: int) -> Site:
    return (0,) * d


def unit_offsets(d: int) -> List[Site]:
    """The 2d unit vectors, coordinate index ascending, minus before plus."""
    out = []
    for i in range(d):
        for s in (-1, 1):
            v = [0] * d
            v[i] = s
            out.append(tuple(v))
    return out


def neighbors(x: Site) -> List[Site]:
    out = []
    for i, xi in enumerate(x):
        out.append(x[:i] + (xi - 1,) + x[i + 1:])
        out.append(x[:i] + (xi + 1,) + x[i + 1:])
    return out


_NEIGHBOR_FNS: Dict[int, Callable[[Site], tuple]] = {}


def neighbor_fn(d: int) -> Callable[[Site], tuple]:
    """A memoised neighbour function for dimension d (same order as `neighbors`).

    Simulations revisit the same sites many times, so a cache hit is much cheaper
    than rebuilding the tuples."""
    fn = _NEIGHBOR_FNS.get(d)
    if fn is None:
        fn = _NEIGHBOR_FNS[d] = functools.lru_cache(maxsize=1 << 20)(_raw_neighbor_fn(d))
    return fn


def _raw_neighbor_fn(d: int) -> Callable[[Site], tuple]:
    if d == 1:
        return lambda x: ((x[0] - 1,), (x[0] + 1,))
    if d == 2:
        return lambda x: ((x[0] - 1, x[1]), (x[0] + 1, x[1]), (x[0], x[1] - 1), (x[0], x[1] + 1))
    if d == 3:
        return lambda x: ((x[0] - 1, x[1], x[2]), (x[0] + 1, x[1], x[2]),
                          (x[0], x[1] - 1, x[2]), (x[0], x[1] + 1, x[2]),
                          (x[0], x[1], x[2] - 1), (x[0], x[1], x[2] + 1))

    def nb(x):
        out = []
        for i, c in enumerate(x):
            out.append(x[:i] + (c - 1,) + x[i + 1:])
            out.append(x[:i] + (c + 1,) + x[i + 1:])
        return tuple(out)
    return nb


def outer_boundary(X: Iterable[Site]) -> Region:
    X = X if isinstance(X, (set, frozenset, dict)) else set(X)
    out = set()
    for x in X:
        for y in neighbors(x):
            if y not in X:
                out.add(y)
    return out


def l1(x: Site) -> int:
    return sum(abs(c) for c in x)


def diamond_layer(d: int, r: int) -> Region:
    """Sites with sum |x_i| == r."""
    if r == 0:
        return {origin(d)}
    out = set()

    def rec(prefix, left, k):
        if k == d - 1:
            out.add(prefix + (left,))
            if left:
                out.add(prefix + (-left,))
            return
        for v in range(-left, left + 1):
            rec(prefix + (v,), left - abs(v), k + 1)

    rec((), r, 0)
    return out


def diamond_region(d: int, r: int) -> Region:
    if r < 0:
        raise ValueError("radius must be non-negative")
    out = set()
    for k in range(r + 1):
        out |= diamond_layer(d, k)
    return out


def cube_region(center: Site, k: int) -> Region:
    if k < 0:
        raise ValueError("k must be non-negative")
    ranges = [range(c - k, c + k + 1) for c in center]
    return set(itertools.product(*ranges))


def gamma_set(d: int, k: int, i: int) -> Region:
    """Diagonal front sets: start at (k,...,k), then step i keeps the sites one layer up
    that have exactly i neighbours in the previous set."""
    if not 0 <= i <= d:
        raise ValueError("need 0 <= i <= d")
    cur = {(k,) * d}
    for j in range(1, i + 1):
        cand = set()
        for x in cur:
            for y in neighbors(x):
                if sum(y) == sum(x) + 1:
                    cand.add(y)
        cur = {y for y in cand if sum(1 for z in neighbors(y) if z in cur) == j}
    return cur


def parity(x: Site) -> str:
    return "even" if sum(x) % 2 == 0 else "odd"


def bounding_box(X: Iterable[Site]):
    """Coordinate-wise (mins, maxs) of a non-empty set of sites."""
    it = iter(X)
    first = next(it)
    lo, hi = list(first), list(first)
    for x in it:
        for i, c in enumerate(x):
            if c < lo[i]:
                lo[i] = c
            elif c > hi[i]:
                hi[i] = c
    return tuple(lo), tuple(hi)


def is_box(X: Region) -> bool:
    if not X:
        return True
    lo, hi = bounding_box(X)
    size = 1
    for a, b in zip(lo, hi):
        size *= b - a + 1
    return size == len(X)


def symmetry_images(x: Site) -> Set[Site]:
    """Orbit of x under coordinate permutations and sign flips."""
    out = set()
    for perm in itertools.permutations(x):
        for signs in itertools.product((1, -1), repeat=len(x)):
            out.add(tuple(s * c for s, c in zip(signs, perm)))
    return out


@dataclass
class SparseConfiguration:
    """Masses on Z^d: every site not listed in `explicit` carries `background`."""

    d: int
    background: AffineMass = H
    explicit: Dict[Site, AffineMass] = field(default_factory=dict)

    def __post_init__(self):
        self.explicit = {x: m for x, m in self.explicit.items() if m != self.background}

    def __getitem__(self, x: Site) -> AffineMass:
        return self.explicit.get(x, self.background)

    def __setitem__(self, x: Site, m: AffineMass):
        if m == self.background:
            self.explicit.pop(x, None)
        else:
            self.explicit[x] = m

    def sites(self) -> Iterator[Site]:
        return iter(self.explicit)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseConfiguration):
            return NotImplemented
        return self.d == other.d and self.background == other.background and self.explicit == other.explicit

    def total(self, X: Iterable[Site]) -> AffineMass:
        a = b = 0
        for x in X:
            m = self[x]
            a += m.a
            b += m.b
        return AffineMass(a, b)
