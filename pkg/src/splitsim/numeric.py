"""Exact masses of the form a + b*h and decisions that hold uniformly over an h-interval.

Every lattice mass in a run started from a point source on a background of
mass h is affine in h, so a single symbolic run can stand for a whole range
of backgrounds as long as every threshold comparison has the same outcome
across that range.  The helpers here decide such comparisons exactly by
looking at the interval endpoints.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

Number = Union[int, Fraction]


class ParseError(ValueError):
    """Malformed textual input; carries the 1-based line number when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateInterval(ValueError):
    """A mapping interval [lo(h), hi(h)) is empty somewhere on the h-range."""


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        # floats are only accepted when they are exact binary fractions the caller meant literally
        return Fraction(x)
    return Fraction(x)


def parse_fraction(text: str) -> Fraction:
    """Parse `p/q` or an integer.  A zero denominator is an error, not a crash."""
    s = text.strip()
    m = re.fullmatch(r"([+-]?\d+)(?:/(\d+))?", s)
    if not m:
        raise ParseError(f"not a rational number: {text!r}")
    num = int(m.group(1))
    den = int(m.group(2)) if m.group(2) is not None else 1
    if den == 0:
        raise ParseError(f"zero denominator in {text!r}")
    return Fraction(num, den)


def format_fraction(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class AffineMass:
    """The mass a + b*h with exact rational coefficients."""

    a: Fraction = Fraction(0)
    b: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "a", as_fraction(self.a))
        object.__setattr__(self, "b", as_fraction(self.b))

    @classmethod
    def const(cls, value) -> "AffineMass":
        return cls(as_fraction(value), Fraction(0))

    @classmethod
    def background(cls) -> "AffineMass":
        return cls(Fraction(0), Fraction(1))

    def __add__(self, other: "AffineMass") -> "AffineMass":
        return AffineMass(self.a + other.a, self.b + other.b)

    def __sub__(self, other: "AffineMass") -> "AffineMass":
        return AffineMass(self.a - other.a, self.b - other.b)

    def __neg__(self) -> "AffineMass":
        return AffineMass(-self.a, -self.b)

    def __mul__(self, k) -> "AffineMass":
        k = as_fraction(k)
        return AffineMass(self.a * k, self.b * k)

    __rmul__ = __mul__

    def __truediv__(self, k) -> "AffineMass":
        k = as_fraction(k)
        return AffineMass(self.a / k, self.b / k)

    def __call__(self, h) -> Fraction:
        return self.a + self.b * as_fraction(h)

    def eval(self, h) -> Fraction:
        return self(h)

    def is_zero(self) -> bool:
        return self.a == 0 and self.b == 0

    def __str__(self) -> str:
        return f"{format_fraction(self.a)} + {format_fraction(self.b)}*h"

    def compact(self) -> str:
        return f"{format_fraction(self.a)}+{format_fraction(self.b)}*h"

    @classmethod
    def parse(cls, text: str) -> "AffineMass":
        """Accepts `a + b*h`, `a+b*h`, `a - b*h`, a bare rational, or `b*h`."""
        s = text.replace(" ", "")
        if not s:
            raise ParseError("empty mass")
        m = re.fullmatch(r"([+-]?\d+(?:/\d+)?)(?:([+-])([+-]?\d+(?:/\d+)?)\*h)?", s)
        if m:
            a = parse_fraction(m.group(1))
            b = Fraction(0)
            if m.group(3) is not None:
                b = parse_fraction(m.group(3))
                if m.group(2) == "-":
                    b = -b
            return cls(a, b)
        m = re.fullmatch(r"([+-]?\d+(?:/\d+)?)\*h", s)
        if m:
            return cls(Fraction(0), parse_fraction(m.group(1)))
        if s in ("h", "+h"):
            return cls(Fraction(0), Fraction(1))
        raise ParseError(f"not an affine mass: {text!r}")


ZERO = AffineMass()
ONE = AffineMass.const(1)
H = AffineMass.background()


def affine_add(x: AffineMass, y: AffineMass) -> AffineMass:
    return x + y


def affine_scale_split(x: AffineMass, d: int) -> AffineMass:
    """The share each of the 2d neighbours receives when x splits."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    return x / (2 * d)


def affine_eval(x: AffineMass, h) -> Fraction:
    return x(h)


@dataclass(frozen=True)
class HInterval:
    """A set of backgrounds: [lo, hi) by default, [lo, hi] when closed, {lo} when lo == hi."""

    lo: Fraction
    hi: Fraction
    closed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lo", as_fraction(self.lo))
        object.__setattr__(self, "hi", as_fraction(self.hi))
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi})")

    @classmethod
    def point(cls, h) -> "HInterval":
        h = as_fraction(h)
        return cls(h, h, True)

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def __contains__(self, h) -> bool:
        h = as_fraction(h)
        if self.is_point or self.closed:
            return self.lo <= h <= self.hi
        return self.lo <= h < self.hi

    def split_at(self, c: Fraction) -> tuple["HInterval", "HInterval"]:
        """Cut into [lo, c) and [c, hi) (the right piece keeps the closed flag)."""
        return HInterval(self.lo, c), HInterval(c, self.hi, self.closed)

    def __str__(self) -> str:
        if self.is_point:
            return format_fraction(self.lo)
        close = "]" if self.closed else ")"
        return f"[{format_fraction(self.lo)},{format_fraction(self.hi)}{close}"

    @classmethod
    def parse(cls, text: str) -> "HInterval":
        s = text.replace(" ", "")
        m = re.fullmatch(r"\[([^,\]\)]+),([^,\]\)]+)([\)\]])", s)
        if m:
            lo, hi = parse_fraction(m.group(1)), parse_fraction(m.group(2))
            if lo >= hi:
                raise ParseError(f"interval needs lo < hi: {text!r}")
            return cls(lo, hi, m.group(3) == "]")
        return cls.point(parse_fraction(s))


@dataclass(frozen=True)
class AlwaysTrue:
    def __bool__(self):
        return True


@dataclass(frozen=True)
class AlwaysFalse:
    def __bool__(self):
        return False


@dataclass(frozen=True)
class Mixed:
    crossing: Fraction

    def __bool__(self):
        raise TypeError("a Mixed decision has no single truth value")


IntervalDecision = Union[AlwaysTrue, AlwaysFalse, Mixed]
ALWAYS_TRUE = AlwaysTrue()
ALWAYS_FALSE = AlwaysFalse()


def nonneg_on(f: AffineMass, I: HInterval) -> bool:
    """f(h) >= 0 for every h in I."""
    if I.is_point:
        return f(I.lo) >= 0
    return f(I.lo) >= 0 and f(I.hi) >= 0


def positive_on(f: AffineMass, I: HInterval) -> bool:
    """f(h) > 0 for every h in I; at an open right end only the limit matters."""
    if I.is_point:
        return f(I.lo) > 0
    if I.closed:
        return f(I.lo) > 0 and f(I.hi) > 0
    return f(I.lo) > 0 and f(I.hi) >= 0


def decide_ge_one_over_interval(x: AffineMass, I: HInterval) -> IntervalDecision:
    f = x - ONE
    if nonneg_on(f, I):
        return ALWAYS_TRUE
    if positive_on(-f, I):
        return ALWAYS_FALSE
    return Mixed((1 - x.a) / x.b)


@dataclass(frozen=True)
class HSet:
    """A connected set of h values with optional ends; None means unbounded."""

    lo: Optional[Fraction] = None
    hi: Optional[Fraction] = None
    lo_closed: bool = True
    hi_closed: bool = True
    empty: bool = False

    def __and__(self, other: "HSet") -> "HSet":
        if self.empty or other.empty:
            return EMPTY_SET
        lo, lo_c = self.lo, self.lo_closed
        if other.lo is not None and (lo is None or other.lo > lo or (other.lo == lo and not other.lo_closed)):
            lo, lo_c = other.lo, other.lo_closed
        hi, hi_c = self.hi, self.hi_closed
        if other.hi is not None and (hi is None or other.hi < hi or (other.hi == hi and not other.hi_closed)):
            hi, hi_c = other.hi, other.hi_closed
        if lo is not None and hi is not None:
            if lo > hi or (lo == hi and not (lo_c and hi_c)):
                return EMPTY_SET
        return HSet(lo, hi, lo_c, hi_c)

    def is_empty(self) -> bool:
        return self.empty

    def __str__(self) -> str:
        if self.empty:
            return "{}"
        left = "(-inf" if self.lo is None else ("[" if self.lo_closed else "(") + format_fraction(self.lo)
        right = "+inf)" if self.hi is None else format_fraction(self.hi) + ("]" if self.hi_closed else ")")
        return f"{left},{right}"


EMPTY_SET = HSet(empty=True)
ALL_H = HSet()


def solve_nonneg(f: AffineMass, strict: bool = False) -> HSet:
    """The set of h with f(h) >= 0 (or > 0 when strict)."""
    if f.b == 0:
        ok = f.a > 0 if strict else f.a >= 0
        return ALL_H if ok else EMPTY_SET
    root = -f.a / f.b
    if f.b > 0:
        return HSet(lo=root, lo_closed=not strict)
    return HSet(hi=root, hi_closed=not strict)


def interval_as_set(I: HInterval) -> HSet:
    if I.is_point:
        return HSet(I.lo, I.lo, True, True)
    return HSet(I.lo, I.hi, True, I.closed)


def membership_set(x: AffineMass, lo: AffineMass, hi: Optional[AffineMass]) -> HSet:
    """All h with lo(h) <= x(h) < hi(h); hi=None means no upper bound."""
    s = solve_nonneg(x - lo)
    if hi is not None:
        s = s & solve_nonneg(hi - x, strict=True)
    return s


def affine_in_halfopen_over_interval(x: AffineMass, lo: AffineMass, hi: Optional[AffineMass],
                                     I: HInterval) -> IntervalDecision:
    """Decide lo(h) <= x(h) < hi(h) across I.  lo == hi encodes the closed singleton {lo(h)}."""
    if hi is not None and lo == hi:
        if I.is_point:
            return ALWAYS_TRUE if x(I.lo) == lo(I.lo) else ALWAYS_FALSE
        return ALWAYS_TRUE if x == lo else ALWAYS_FALSE
    if hi is not None and not nonneg_on(hi - lo, I):
        raise DegenerateInterval(f"[{lo}, {hi}) is empty somewhere on {I}")
    dom = interval_as_set(I)
    inside = membership_set(x, lo, hi) & dom
    if inside.is_empty():
        return ALWAYS_FALSE
    if inside == dom:
        return ALWAYS_TRUE
    # the membership set is a proper sub-interval; report a boundary lying strictly inside I
    if inside.lo is not None and (dom.lo is None or inside.lo > dom.lo or inside.lo_closed != dom.lo_closed):
        return Mixed(inside.lo)
    return Mixed(inside.hi)
