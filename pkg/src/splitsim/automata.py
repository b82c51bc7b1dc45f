"""Finite-state cellular automata with prioritized multiset rules.

A rule `s + s1,...,s2d -> r` fires when the cell's label is matched by `s`
and the 2d neighbour labels can be paired one-to-one with the patterns
s1..s2d in some order.  Patterns are labels, named classes, or `*`.
The first rule in list order that matches wins.

Labels are ASCII strings; `h` is the quiescent background label (written
hbar in the mathematical notation), `d'`, `d!`, `c'` etc. are used verbatim.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .lattice import Region, Site, diamond_region, neighbor_fn, neighbors, origin
from .numeric import ParseError

BACKGROUND = "h"
WILDCARD = "*"


class NoMatchingRule(RuntimeError):
    def __init__(self, site: Site, center: str, nbrs: Sequence[str]):
        self.site = site
        self.center = center
        self.neighbors = tuple(sorted(nbrs))
        super().__init__(f"no rule for {center} + {','.join(self.neighbors)} at {site}")


class AmbiguousRules(RuntimeError):
    pass


@dataclass(frozen=True)
class Rule:
    center: str
    nbrs: Tuple[str, ...]
    result: str

    def __str__(self):
        return f"{self.center} | {' '.join(self.nbrs)} -> {self.result}"


@dataclass
class CAState:
    d: int
    t: int = 0
    labels: Dict[Site, str] = field(default_factory=dict)
    default: str = BACKGROUND

    def __post_init__(self):
        self.labels = {x: l for x, l in self.labels.items() if l != self.default}

    def __getitem__(self, x: Site) -> str:
        return self.labels.get(x, self.default)

    def copy(self) -> "CAState":
        return CAState(self.d, self.t, dict(self.labels), self.default)

    def same_grid(self, other: "CAState") -> bool:
        return self.labels == other.labels


@dataclass
class AutomatonSpec:
    name: str
    d: int
    alphabet: Tuple[str, ...]
    classes: Dict[str, FrozenSet[str]]
    rules: List[Rule]
    initial: Dict[Site, str] = field(default_factory=dict)
    default: str = BACKGROUND

    def __post_init__(self):
        for cname, members in self.classes.items():
            if cname in self.alphabet:
                raise ValueError(f"class name {cname!r} clashes with a label")
            if not set(members) <= set(self.alphabet):
                raise ValueError(f"class {cname!r} uses unknown labels")
        for r in self.rules:
            if len(r.nbrs) != 2 * self.d:
                raise ValueError(f"rule {r} needs {2 * self.d} neighbour patterns")
            for sym in (r.center, *r.nbrs):
                self.symbol_set(sym)
            if r.result not in self.alphabet:
                raise ValueError(f"rule {r} produces unknown label")
        self._cache: Dict[tuple, Optional[str]] = {}
        # keyed by the raw (center, n1, ..., n2d) labels with None for background
        self._raw_cache: Dict[tuple, Optional[str]] = {}
        quiet = self.lookup(self.default, (self.default,) * (2 * self.d))
        if quiet != self.default:
            raise ValueError("the background label must be quiescent among background neighbours")

    def symbol_set(self, sym: str) -> FrozenSet[str]:
        if sym == WILDCARD:
            return frozenset(self.alphabet)
        if sym in self.alphabet:
            return frozenset((sym,))
        if sym in self.classes:
            return self.classes[sym]
        raise ValueError(f"unknown pattern symbol {sym!r}")

    def matches(self, rule: Rule, center: str, nbrs: Sequence[str]) -> bool:
        if center not in self.symbol_set(rule.center):
            return False
        sets = [self.symbol_set(s) for s in rule.nbrs]
        return _perfect_match(list(nbrs), sets)

    def applicable(self, center: str, nbrs: Sequence[str]) -> List[Rule]:
        return [r for r in self.rules if self.matches(r, center, nbrs)]

    def lookup(self, center: str, sorted_nbrs: Tuple[str, ...]) -> Optional[str]:
        """Result label of the first matching rule, or None; memoized on the multiset."""
        key = (center, sorted_nbrs)
        try:
            return self._cache[key]
        except KeyError:
            pass
        res = None
        for r in self.rules:
            if self.matches(r, center, sorted_nbrs):
                res = r.result
                break
        self._cache[key] = res
        return res

    def lookup_raw(self, key: tuple) -> Optional[str]:
        """`lookup` for an unsorted (center, *neighbours) tuple where None is the background."""
        d = self.default
        labs = [d if v is None else v for v in key]
        res = self.lookup(labs[0], tuple(sorted(labs[1:])))
        self._raw_cache[key] = res
        return res

    def initial_state(self) -> CAState:
        return CAState(self.d, 0, dict(self.initial), self.default)

    def to_text(self) -> str:
        lines = [f"automaton {self.name}", f"dim {self.d}", f"labels {' '.join(self.alphabet)}",
                 f"default {self.default}"]
        for cname, members in self.classes.items():
            lines.append(f"class {cname} = {' '.join(l for l in self.alphabet if l in members)}")
        for r in self.rules:
            lines.append(str(r))
        for x in sorted(self.initial):
            lines.append(f"init {' '.join(map(str, x))} = {self.initial[x]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "AutomatonSpec":
        name, d, alphabet, default = "custom", None, None, BACKGROUND
        classes: Dict[str, FrozenSet[str]] = {}
        rules: List[Rule] = []
        initial: Dict[Site, str] = {}
        for no, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            head, _, rest = line.partition(" ")
            try:
                if head == "automaton":
                    name = rest.strip()
                elif head == "dim":
                    d = int(rest)
                elif head == "labels":
                    alphabet = tuple(rest.split())
                elif head == "default":
                    default = rest.strip()
                elif head == "class":
                    cname, eq, members = rest.partition("=")
                    if not eq:
                        raise ParseError("class line needs '='", no)
                    classes[cname.strip()] = frozenset(members.split())
                elif head == "init":
                    coords, eq, lab = rest.partition("=")
                    if not eq:
                        raise ParseError("init line needs '='", no)
                    initial[tuple(int(c) for c in coords.split())] = lab.strip()
                else:
                    center, bar, tail = line.partition("|")
                    pats, arrow, result = tail.partition("->")
                    if not bar or not arrow:
                        raise ParseError(f"cannot read rule {line!r}", no)
                    rules.append(Rule(center.strip(), tuple(pats.split()), result.strip()))
            except ValueError as exc:
                if isinstance(exc, ParseError):
                    raise
                raise ParseError(str(exc), no) from None
        if alphabet is None:
            raise ParseError("missing 'labels' header")
        if d is None:
            d = len(rules[0].nbrs) // 2 if rules else 1
        return cls(name, d, alphabet, classes, rules, initial, default)


def _perfect_match(labels: List[str], sets: List[FrozenSet[str]]) -> bool:
    """Can each label be paired with a distinct pattern set containing it?"""
    if not labels:
        return True
    first, rest = labels[0], labels[1:]
    tried = set()
    for i, s in enumerate(sets):
        if first in s and s not in tried:
            tried.add(s)
            if _perfect_match(rest, sets[:i] + sets[i + 1:]):
                return True
    return False


def ca_step(spec: AutomatonSpec, state: CAState, strict: bool = False) -> CAState:
    """All cells update in parallel.  Only cells in or next to the non-background
    region are evaluated; a background cell among background neighbours stays put."""
    labels = state.labels
    default = spec.default
    nb = neighbor_fn(spec.d)
    cand = set(labels)
    upd = cand.update
    for x in labels:
        upd(nb(x))
    get = labels.get
    raw = spec._raw_cache
    new = {}
    for x in cand:
        key = (get(x),) + tuple(map(get, nb(x)))
        r = raw.get(key, False)
        if r is False:
            r = spec.lookup_raw(key)
        if r is None:
            c = get(x, default)
            ns = tuple(sorted(get(y, default) for y in nb(x)))
            raise NoMatchingRule(x, c, ns)
        if strict:
            c = get(x, default)
            ns = tuple(sorted(get(y, default) for y in nb(x)))
            results = {rule.result for rule in spec.applicable(c, ns)}
            if len(results) > 1:
                raise AmbiguousRules(f"{c} + {','.join(ns)} at {x} matches rules with results {sorted(results)}")
        if r != default:
            new[x] = r
    return CAState(state.d, state.t + 1, new, default)


def ca_run(spec: AutomatonSpec, state: CAState, steps: int, strict: bool = False) -> CAState:
    for _ in range(steps):
        state = ca_step(spec, state, strict)
    return state


def growth_cluster(state: CAState) -> Region:
    """Cells whose label is not the background label (a live view of the keys)."""
    return state.labels.keys()


def cluster_radius(state: CAState) -> int:
    """Largest sup-norm among non-background cells."""
    return max((max(abs(c) for c in x) for x in state.labels), default=0)


# ---- built-in automata ----

def builtin_diamond(d: int) -> AutomatonSpec:
    k = 2 * d
    rules = [
        Rule("h", ("s",) * k, "h"),
        Rule("s", ("u",) * k, "u"),
        Rule("u", ("s",) * k, "e"),
        Rule("h", ("u",) + ("*",) * (k - 1), "u"),
    ]
    return AutomatonSpec("diamond", d, ("e", "h", "u"), {"s": frozenset({"e", "h"})}, rules,
                         {origin(d): "u"})


SQUARE_LABELS = ("e", "h", "p", "m", "m'", "c", "d")


def builtin_square() -> AutomatonSpec:
    R = Rule
    rules = [
        R("h", ("s", "s", "s", "s"), "h"),
        R("p", ("s", "s", "s", "s"), "p"),
        R("c", ("*", "*", "*", "*"), "c"),
        R("m", ("*", "*", "*", "*"), "e"),
        R("d", ("*", "*", "*", "*"), "c"),
        R("m'", ("*", "*", "*", "*"), "c"),
        R("h", ("d", "s", "s", "s"), "m"),
        R("h", ("m", "s", "s", "s"), "p"),
        R("p", ("m", "m", "m'", "s"), "d"),
        R("h", ("d", "m", "s", "s"), "d"),
        R("h", ("m", "m", "s", "s"), "d"),
        R("e", ("d", "d", "c", "p"), "m'"),
    ]
    return AutomatonSpec("square", 2, SQUARE_LABELS, {"s": frozenset({"e", "h", "p"})}, rules,
                         {(0, 0): "d"})


OCTAGON_LABELS = ("e", "h", "p", "m", "d", "d'", "d!", "c", "c'", "q", "q'")

# first quadrant at t=0, rows from y=0 upwards, columns from x=0
OCTAGON_QUADRANT = [
    ["c", "e", "c", "e", "c'", "e", "p"],
    ["e", "c", "e", "c", "e", "d!"],
    ["c", "e", "c", "e", "c", "p"],
    ["e", "c", "e", "c", "e", "m"],
    ["c'", "e", "c", "e", "d'"],
    ["e", "d!", "p", "m"],
    ["p"],
]


def reflect_quadrant(quadrant: Dict[Tuple[int, int], str]) -> Dict[Site, str]:
    """Extend first-quadrant labels to Z^2 by reflections in both axes."""
    out = {}
    for (x, y), lab in quadrant.items():
        for sx in (1, -1):
            for sy in (1, -1):
                out[(sx * x, sy * y)] = lab
    return out


def octagon_initial() -> Dict[Site, str]:
    quad = {}
    for y, row in enumerate(OCTAGON_QUADRANT):
        for x, lab in enumerate(row):
            if lab != BACKGROUND:
                quad[(x, y)] = lab
    return reflect_quadrant(quad)


# A p cell whose neighbours all stay stable keeps its mass, so it must keep its label.
# The square automaton lists this rule; the octagon list needs it too (the tile's top
# p cell has neighbours e,h,h,h already at t=0).
P_PERSISTS = Rule("p", ("s", "s", "s", "s"), "p")


def builtin_octagon(as_printed: bool = False) -> AutomatonSpec:
    """The 20 listed rules (rule 20 ahead of rule 19) plus the p-persistence rule.
    With as_printed=True the persistence rule is left out."""
    R = Rule
    rules = [
        R("h", ("s", "s", "s", "s"), "h"),
        R("u", ("*", "*", "*", "*"), "e"),
        R("h", ("m", "s", "s", "s"), "p"),
        R("h", ("d", "s", "s", "s"), "m"),
        R("h", ("d'", "s", "s", "s"), "m"),
        R("h", ("d!", "s", "s", "s"), "m"),
        R("h", ("q", "s", "s", "s"), "d"),
        R("h", ("q", "m", "s", "s"), "d!"),
        R("h", ("q'", "m", "s", "s"), "d!"),
        R("h", ("m", "d'", "s", "s"), "d'"),
        R("h", ("d'", "d'", "s", "s"), "d'"),
        R("p", ("d!", "m", "c", "s"), "q'"),
        R("p", ("m", "m", "c", "s"), "q"),
        R("p", ("d", "m", "c", "s"), "q"),
        R("e", ("q'", "c", "d'", "s"), "c"),
        R("e", ("d!", "d!", "c'", "s"), "c"),
        R("e", ("q", "c", "d!", "s"), "c"),
        R("e", ("q'", "c", "d!", "s"), "c"),
        # the exception to the all-unstable rule must be tried first
        R("e", ("m", "q", "q", "c"), "c'"),
        R("e", ("u", "u", "u", "u"), "c"),
    ]
    if not as_printed:
        rules.insert(1, P_PERSISTS)
    s = frozenset({"e", "h", "p"})
    u = frozenset(OCTAGON_LABELS) - s
    return AutomatonSpec("octagon", 2, OCTAGON_LABELS, {"s": s, "u": u}, rules, octagon_initial())


def builtin(name: str, d: int = 2) -> AutomatonSpec:
    if name == "diamond":
        return builtin_diamond(d)
    if name == "square":
        return builtin_square()
    if name == "octagon":
        return builtin_octagon()
    raise ValueError(f"unknown automaton {name!r}")


# ---- recurrent patterns ----

def diamond_pattern(d: int, t: int) -> CAState:
    """u on the diamond of radius t where sum(x) - t is even, e elsewhere on it."""
    labels = {x: ("u" if (sum(x) - t) % 2 == 0 else "e") for x in diamond_region(d, t)}
    return CAState(d, t, labels)


def construct_zeta(r: int) -> CAState:
    """Square-automaton pattern at time 2r: c inside the box of radius r-1, d/e alternating
    on its boundary ring, p just outside next to an e."""
    if r < 0:
        raise ValueError("r must be non-negative")
    labels = {}
    for i in range(-r, r + 1):
        for j in range(-r, r + 1):
            if max(abs(i), abs(j)) <= r - 1:
                labels[(i, j)] = "c"
            else:
                labels[(i, j)] = "d" if (i - j) % 2 == 0 else "e"
    ring = [x for x, l in labels.items() if l == "e"]
    for x in ring:
        for y in neighbors(x):
            if max(abs(y[0]), abs(y[1])) > r:
                labels[y] = "p"
    return CAState(2, 2 * r, labels)


TILE = ["c e c e q'".split(), "e d! p m h".split(), "p h h h h".split()]
CORNERSTONE = ["e c e p".split(), "c e d' h".split(), "e d' h h".split(), "p h h h".split()]


def construct_chi(i: int) -> CAState:
    """Octagon-automaton pattern at time 5 + 10i, built from tiles and a cornerstone."""
    if i < 0:
        raise ValueError("i must be non-negative")
    placed: Dict[Tuple[int, int], str] = {}

    def put(block, x0, y0):
        for dy, row in enumerate(block):
            for dx, lab in enumerate(row):
                placed[(x0 + dx, y0 + dy)] = lab

    c0 = 5 * (i + 1)
    put(CORNERSTONE, c0, c0)
    for j in range(i + 1):
        put(TILE, 5 * (i - j), 7 + 5 * i + j)
    placed[(0, 7 + 6 * i)] = "c'"
    # mirror across the diagonal so blocks obstruct paths on both sides
    blocks = dict(placed)
    for (x, y), lab in placed.items():
        blocks.setdefault((y, x), lab)
    size = 7 + 6 * i + 4
    reach = {}
    quad = {}
    for x in range(size + 1):
        for y in range(size + 1):
            if (x, y) in blocks:
                reach[(x, y)] = False
                quad[(x, y)] = blocks[(x, y)]
                continue
            if x == 0 and y == 0:
                ok = True
            else:
                ok = (x > 0 and reach[(x - 1, y)]) or (y > 0 and reach[(x, y - 1)])
            reach[(x, y)] = ok
            if ok:
                quad[(x, y)] = "e" if (x + y) % 2 == 0 else "c"
    # every cell beyond the scanned box is cut off from the origin by the blocks
    quad = {k: v for k, v in quad.items() if v != BACKGROUND}
    return CAState(2, 5 + 10 * i, reflect_quadrant(quad))


@dataclass
class RecurrenceReport:
    ok: bool
    checked: List[Tuple[int, int]]
    first_mismatch: Optional[dict] = None
    error: Optional[str] = None

    def summary(self) -> str:
        if self.ok:
            return f"ok: {len(self.checked)} scheduled configurations matched"
        if self.error:
            return f"failed: {self.error}"
        return f"failed: {self.first_mismatch}"


def verify_recurrence(spec: AutomatonSpec, constructor: Callable[[int], CAState],
                      schedule: Callable[[int], int], indices: Iterable[int],
                      start: Optional[CAState] = None, on_state=None) -> RecurrenceReport:
    """Run the automaton and compare against constructor(i) at time schedule(i)."""
    state = start if start is not None else spec.initial_state()
    checked = []
    for i in sorted(indices):
        target_t = schedule(i)
        try:
            while state.t < target_t:
                state = ca_step(spec, state)
                if on_state is not None:
                    on_state(state)
        except NoMatchingRule as exc:
            return RecurrenceReport(False, checked, error=str(exc))
        expected = constructor(i)
        if not state.same_grid(expected):
            diff = sorted(set(state.labels) | set(expected.labels))
            for x in diff:
                if state[x] != expected[x]:
                    return RecurrenceReport(False, checked, {"index": i, "t": state.t, "site": x,
                                                             "expected": expected[x], "actual": state[x]})
        checked.append((i, target_t))
    return RecurrenceReport(True, checked)
