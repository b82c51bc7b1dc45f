"""Splitting dynamics on Z^d with exact masses.

Internally every mass is kept as three integers (A, B, E) standing for
(A + B*h) / (D * (2d)**E), where D clears the denominators of the source
mass.  Additions only rescale by powers of 2d, and every stability
decision reduces to integer comparisons at the ends of the h-interval, so
no Fraction objects are created inside the hot loop.
"""
from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional

from .lattice import Region, Site, SparseConfiguration, is_box, neighbor_fn, origin
from .numeric import (AffineMass, H, HInterval, ONE, ZERO, as_fraction, nonneg_on)


class InvalidParams(ValueError):
    pass


class PreconditionUnmet(ValueError):
    pass


class IntervalSplit(Exception):
    """Some stability decision changes inside the h-interval; the run cannot proceed uniformly."""

    def __init__(self, crossing: Fraction, site: Site, t: int):
        self.crossing = crossing
        self.site = site
        self.t = t
        super().__init__(f"decision at site {site} changes at h={crossing} (t={t})")


@dataclass(frozen=True)
class Parallel:
    def __str__(self):
        return "parallel"


@dataclass(frozen=True)
class SingleSiteLexMin:
    def __str__(self):
        return "lexmin"


@dataclass(frozen=True)
class SingleSiteRandom:
    seed: int = 0

    def __str__(self):
        return f"random:{self.seed}"


SplittingOrder = object


def parse_order(text: str):
    t = text.strip().lower()
    if t == "parallel":
        return Parallel()
    if t in ("lexmin", "leftmost"):
        return SingleSiteLexMin()
    if t.startswith("random"):
        _, _, seed = t.partition(":")
        return SingleSiteRandom(int(seed) if seed else 0)
    raise ValueError(f"unknown splitting order {text!r}")


@dataclass
class Stabilized:
    final: "Evolution"


@dataclass
class BudgetExhausted:
    state: "Evolution"
    diagnostics: dict = field(default_factory=dict)


@dataclass
class CertifiedExplosive:
    reason: str


class Evolution:
    """One run of the splitting model from a point source.

    `h` may be a single background or an interval; in the latter case every
    step is certified to behave identically for all backgrounds in it.
    """

    def __init__(self, d: int, n, h, order=None, record: bool = False):
        if d < 1:
            raise InvalidParams("dimension must be at least 1")
        n = n if isinstance(n, AffineMass) else AffineMass.const(n)
        I = h if isinstance(h, HInterval) else HInterval.point(h)
        if I.hi > 1 or (I.hi == 1 and (I.closed or I.is_point)):
            raise InvalidParams("background must stay below 1")
        if not nonneg_on(n, I):
            raise InvalidParams("source mass must be non-negative on the whole interval")
        self.d = d
        self.k = 2 * d
        self.n = n
        self.h_interval = I
        self.order = order if order is not None else Parallel()
        self.t = 0
        self.record = record
        self.history: List[List[Site]] = []
        self.trace: List[tuple] = []
        self.toppled: set = set()
        self.split_counts: Dict[Site, int] = {}
        self.parity_ok = True
        self.reach = 0
        self._window: set = set()
        # sites whose mass changed in the last step
        self.changed: set = {origin(d)}
        self._nb = neighbor_fn(d)
        D = math.lcm(n.a.denominator, n.b.denominator)
        self._D = D
        o = origin(d)
        self._mass: Dict[Site, list] = {o: [int(n.a * D), int(n.b * D), 0]}
        self._odo: Dict[Site, list] = {}
        self._pow = [1]
        ends = [I.lo] if I.is_point else [I.lo, I.hi]
        self._ends = [(e.numerator, e.denominator) for e in ends]
        self._thr = [[D * q] for _, q in self._ends]
        self._dirty = {o}
        self._unstable: set = set()
        self._heap: list = []
        self._pool: list = []
        self._pool_pos: Dict[Site, int] = {}
        self._rng = random.Random(self.order.seed) if isinstance(self.order, SingleSiteRandom) else None
        self._last_unstable = None
        if record:
            self.trace.append((0, None, 0, ZERO))

    # ---- integer representation helpers ----
    def _ensure_pow(self, e: int):
        pw = self._pow
        while len(pw) <= e:
            pw.append(pw[-1] * self.k)
            for thr, (_, q) in zip(self._thr, self._ends):
                thr.append(self._D * q * pw[-1])

    def _to_affine(self, m) -> AffineMass:
        den = self._D * self._pow[m[2]]
        return AffineMass(Fraction(m[0], den), Fraction(m[1], den))

    def mass(self, x: Site) -> AffineMass:
        m = self._mass.get(x)
        return H if m is None else self._to_affine(m)

    def mass_at(self, x: Site, h) -> Fraction:
        return self.mass(x)(h)

    def scaled(self, x: Site):
        """(A, B, E) with mass (A + B*h) / (D * (2d)**E); background is (0, D, 0)."""
        m = self._mass.get(x)
        return (0, self._D, 0) if m is None else (m[0], m[1], m[2])

    @property
    def denominator_base(self) -> int:
        return self._D

    @property
    def config(self) -> SparseConfiguration:
        return SparseConfiguration(self.d, H, {x: self._to_affine(m) for x, m in self._mass.items()})

    @property
    def odometer(self) -> Dict[Site, AffineMass]:
        return {x: self._to_affine(m) for x, m in self._odo.items()}

    def explicit_sites(self):
        return self._mass.keys()

    # ---- decisions ----
    def _decide(self, x: Site, m) -> Optional[bool]:
        """True/False when uniform over the interval, None when mixed."""
        A, B, E = m
        if len(self._ends) == 1:
            p, q = self._ends[0]
            return A * q + B * p >= self._thr[0][E]
        (p0, q0), (p1, q1) = self._ends
        f0 = A * q0 + B * p0 - self._thr[0][E]
        f1 = A * q1 + B * p1 - self._thr[1][E]
        if f0 >= 0 and f1 >= 0:
            return True
        if f0 < 0 and (f1 < 0 or (f1 == 0 and not self.h_interval.closed)):
            return False
        return None

    def _crossing(self, m) -> Fraction:
        A, B, E = m
        return Fraction(self._D * self._pow[E] - A, B)

    def _refresh(self):
        """Classify all sites whose mass changed since the last step."""
        dirty = self._dirty
        if not dirty:
            return
        mass = self._mass
        single = not isinstance(self.order, Parallel)
        # the random order's pool depends on insertion order, so fix it
        todo = sorted(dirty) if single else dirty
        found = []
        for x in todo:
            m = mass.get(x)
            if m is None:
                continue
            v = self._decide(x, m)
            if v is None:
                raise IntervalSplit(self._crossing(m), x, self.t)
            if v:
                found.append(x)
        unstable = self._unstable
        for x in found:
            if x in unstable:
                continue
            unstable.add(x)
            if single:
                if isinstance(self.order, SingleSiteLexMin):
                    heapq.heappush(self._heap, x)
                else:
                    self._pool_pos[x] = len(self._pool)
                    self._pool.append(x)
        self._dirty = set()

    def unstable_sites(self) -> set:
        self._refresh()
        return set(self._unstable)

    # ---- dynamics ----
    def step(self) -> bool:
        """Advance one time step.  Returns False (and changes nothing) when stable."""
        self._refresh()
        if not self._unstable:
            self.changed = set()
            return False
        n_unstable = len(self._unstable)
        if isinstance(self.order, Parallel):
            splitters = sorted(self._unstable)
            self._unstable = set()
        elif isinstance(self.order, SingleSiteLexMin):
            heap = self._heap
            while heap[0] not in self._unstable:
                heapq.heappop(heap)
            x = heapq.heappop(heap)
            self._unstable.discard(x)
            splitters = [x]
        else:
            pool = self._pool
            i = self._rng.randrange(len(pool))
            x = pool[i]
            last = pool.pop()
            if last != x:
                pool[i] = last
                self._pool_pos[last] = i
            del self._pool_pos[x]
            self._unstable.discard(x)
            splitters = [x]
        self._split(splitters)
        if self.record:
            self.history.append(splitters)
            self.trace.append((self.t, n_unstable, len(self.toppled), self.window_total()))
        return True

    def _split(self, splitters: List[Site]):
        mass = self._mass
        odo = self._odo
        pw = self._pow
        nb = self._nb
        D = self._D
        emitted = []
        maxe = 0
        t = self.t
        for x in splitters:
            m = mass[x]
            emitted.append((x, m[0], m[1], m[2]))
            if m[2] >= maxe:
                maxe = m[2]
            mass[x] = [0, 0, 0]
            if (sum(x) - t) % 2:
                self.parity_ok = False
        self._ensure_pow(maxe + 1)
        dirty = self._dirty
        counts = self.split_counts
        top = self.toppled
        win = self._window
        changed = self.changed = set(splitters)
        for x, A, B, E in emitted:
            E1 = E + 1
            ys = nb(x)
            for y in ys:
                m = mass.get(y)
                if m is None:
                    mass[y] = [A, D * pw[E1] + B, E1]
                else:
                    Ey = m[2]
                    if Ey == E1:
                        m[0] += A
                        m[1] += B
                    elif Ey > E1:
                        f = pw[Ey - E1]
                        m[0] += A * f
                        m[1] += B * f
                    else:
                        f = pw[E1 - Ey]
                        m[0] = m[0] * f + A
                        m[1] = m[1] * f + B
                        m[2] = E1
            dirty.update(ys)
            changed.update(ys)
            u = odo.get(x)
            if u is None:
                odo[x] = [A, B, E]
            else:
                Eu = u[2]
                if Eu == E:
                    u[0] += A
                    u[1] += B
                elif Eu > E:
                    f = pw[Eu - E]
                    u[0] += A * f
                    u[1] += B * f
                else:
                    f = pw[E - Eu]
                    u[0] = u[0] * f + A
                    u[1] = u[1] * f + B
                    u[2] = E
            counts[x] = counts.get(x, 0) + 1
            if x not in top:
                top.add(x)
                win.add(x)
                win.update(ys)
                r = max(abs(c) for c in x)
                if r > self.reach:
                    self.reach = r
        self.t += 1

    def certified_explosive_reason(self) -> Optional[str]:
        """A proven reason why this run cannot stabilize, if one applies to the whole interval."""
        from .analysis import theory_constants
        I, d, n = self.h_interval, self.d, self.n
        if I.lo >= 1 - Fraction(1, 2 * d) and nonneg_on(n - ONE, I):
            return f"h >= 1 - 1/(2d) = {1 - Fraction(1, 2 * d)} and n >= 1 (any order)"
        if not isinstance(self.order, Parallel):
            return None
        if d == 2:
            if I.lo >= Fraction(13, 19) and nonneg_on(n - AffineMass(64, -84), I):
                return "d=2, h >= 13/19 and n >= 64 - 84h (parallel order)"
        elif d >= 3:
            c = theory_constants(d).C_d_prime
            if I.lo >= c and nonneg_on(n - AffineMass(2 * d, -2 * d), I):
                return f"h >= C'_d = {c} and n >= 2d(1-h) (parallel order)"
        return None

    def run(self, max_steps: int = 10 ** 6, max_radius: Optional[int] = None, shortcut: bool = True):
        """Evolve until stable or out of budget.  IntervalSplit propagates to the caller."""
        if max_steps <= 0 or (max_radius is not None and max_radius <= 0):
            raise InvalidParams("budgets must be positive")
        if shortcut:
            reason = self.certified_explosive_reason()
            if reason:
                return CertifiedExplosive(reason)
        series = []
        for _ in range(max_steps):
            if not self.step():
                return Stabilized(self)
            series.append((self.t, len(self.toppled)))
            if max_radius is not None and self.reach > max_radius:
                return BudgetExhausted(self, {"reason": "radius", "series": series})
        self._refresh()
        if not self._unstable:
            return Stabilized(self)
        return BudgetExhausted(self, {"reason": "steps", "series": series})

    # ---- bookkeeping ----
    def window_view(self):
        """T_t with its outer boundary, without copying; do not mutate."""
        return self._window

    def window(self) -> Region:
        """T_t together with its outer boundary."""
        return set(self._window)

    def window_total(self) -> AffineMass:
        W = self.window()
        if not W:
            return ZERO
        emax = max((self._mass[x][2] for x in W if x in self._mass), default=0)
        pw = self._pow
        A = B = 0
        for x in W:
            m = self._mass.get(x)
            if m is None:
                B += self._D * pw[emax]
            else:
                f = pw[emax - m[2]]
                A += m[0] * f
                B += m[1] * f
        den = self._D * pw[emax]
        return AffineMass(Fraction(A, den), Fraction(B, den))

    def initial_window_total(self) -> AffineMass:
        W = self.window()
        o = origin(self.d)
        if o in W:
            return self.n + H * (len(W) - 1)
        return H * len(W)

    def trace_csv(self) -> str:
        if not self.record:
            raise ValueError("trace needs record=True")
        lines = ["t,|U_t|,|T_t|,total_mass_window"]
        for t, nu, nt, tot in self.trace:
            lines.append(f"{t},{'' if nu is None else nu},{nt},{tot.compact()}")
        return "\n".join(lines) + "\n"


def init(d: int, n, h, order=None, record: bool = False) -> Evolution:
    return Evolution(d, n, h, order, record)


def step(state: Evolution) -> Evolution:
    state.step()
    return state


def run(state: Evolution, max_steps: int = 10 ** 6, max_radius: Optional[int] = None, shortcut: bool = True):
    return state.run(max_steps, max_radius, shortcut)


def parity_check(history: List[List[Site]]) -> bool:
    """Every site split at step t has coordinate sum of the same parity as t."""
    for t, sites in enumerate(history):
        for x in sites:
            if (sum(x) - t) % 2:
                return False
    return True


def t_bound_check(outcome: Stabilized, n, h, count_origin: bool = False) -> bool:
    """|T| <= n / (1/2 - h).

    With `count_origin` the bound is (n - h) / (1/2 - h): the origin starts with n
    rather than n + h, which matters when h < 0."""
    n, h = as_fraction(n), as_fraction(h)
    if h >= Fraction(1, 2):
        raise PreconditionUnmet("the bound needs h < 1/2")
    top = n - h if count_origin else n
    return len(outcome.final.toppled) <= top / (Fraction(1, 2) - h)


def rectangle_check(outcome: Stabilized, d: int, h) -> bool:
    h = as_fraction(h)
    if h < 1 - Fraction(1, d):
        raise PreconditionUnmet("the box shape is only claimed for h >= 1 - 1/d")
    T = outcome.final.toppled
    if not is_box(T):
        return False
    if isinstance(outcome.final.order, Parallel) and T:
        from .lattice import bounding_box
        lo, hi = bounding_box(T)
        return len({b - a for a, b in zip(lo, hi)}) == 1
    return True


def conservation_check(state: Evolution) -> bool:
    return state.window_total() == state.initial_window_total()
