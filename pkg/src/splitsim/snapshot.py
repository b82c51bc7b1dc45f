"""Plain-text snapshots of sparse mass configurations.

Format::

    SPLITSIM 1
    d=2 t=8 order=parallel
    h=[5/7,13/18)
    n=3/1+0/1*h
    -1 0 | 1/2 | 3/4
    ...

One body line per site whose mass differs from the background, sorted by
site, with the constant and h coefficients of its mass.  Every number is
written in one canonical form, so saving a loaded snapshot reproduces the
file byte for byte.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, Optional

from .automata import CAState
from .lattice import Site, SparseConfiguration
from .numeric import H, AffineMass, HInterval, ParseError, format_fraction, parse_fraction

MAGIC = "SPLITSIM 1"


@dataclass
class Snapshot:
    d: int
    t: int
    order: str
    h: HInterval
    n: AffineMass
    masses: Dict[Site, AffineMass] = field(default_factory=dict)

    @classmethod
    def from_evolution(cls, evo) -> "Snapshot":
        order = _order_text(evo.order)
        return cls(evo.d, evo.t, order, evo.h_interval, evo.n, dict(evo.config.explicit))

    def configuration(self) -> SparseConfiguration:
        return SparseConfiguration(self.d, H, dict(self.masses))

    def mass(self, x: Site) -> AffineMass:
        return self.masses.get(x, H)

    def dumps(self) -> str:
        lines = [MAGIC, f"d={self.d} t={self.t} order={self.order}", f"h={self.h}", f"n={self.n.compact()}"]
        for x in sorted(self.masses):
            m = self.masses[x]
            if m == H:
                continue
            coords = " ".join(str(c) for c in x)
            lines.append(f"{coords} | {format_fraction(m.a)} | {format_fraction(m.b)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Snapshot":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines or lines[0] != MAGIC:
            raise ParseError(f"expected {MAGIC!r}", 1)
        if len(lines) < 4:
            raise ParseError("truncated header", len(lines) + 1)
        m = re.fullmatch(r"d=(\d+) t=(\d+) order=(\S+)", lines[1])
        if not m:
            raise ParseError("expected 'd=<int> t=<int> order=<name>'", 2)
        d, t, order = int(m.group(1)), int(m.group(2)), m.group(3)
        if d < 1:
            raise ParseError("dimension must be at least 1", 2)
        if not lines[2].startswith("h="):
            raise ParseError("expected 'h=...'", 3)
        try:
            h = HInterval.parse(lines[2][2:])
        except (ParseError, ValueError) as exc:
            raise ParseError(str(exc), 3) from None
        if not lines[3].startswith("n="):
            raise ParseError("expected 'n=...'", 4)
        try:
            n = AffineMass.parse(lines[3][2:])
        except ParseError as exc:
            raise ParseError(str(exc), 4) from None
        masses: Dict[Site, AffineMass] = {}
        for lineno, line in enumerate(lines[4:], start=5):
            parts = line.split("|")
            if len(parts) != 3:
                raise ParseError("expected 'x1 ... xd | a | b'", lineno)
            try:
                x = tuple(int(c) for c in parts[0].split())
            except ValueError:
                raise ParseError(f"bad site {parts[0].strip()!r}", lineno) from None
            if len(x) != d:
                raise ParseError(f"site has {len(x)} coordinates, expected {d}", lineno)
            if x in masses:
                raise ParseError(f"site {x} listed twice", lineno)
            try:
                a, b = parse_fraction(parts[1]), parse_fraction(parts[2])
            except ParseError as exc:
                raise ParseError(str(exc), lineno) from None
            masses[x] = AffineMass(a, b)
        return cls(d, t, order, h, n, masses)

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "Snapshot":
        with open(path, encoding="ascii") as fh:
            return cls.loads(fh.read())


def save_snapshot(snap: Snapshot, path) -> None:
    snap.save(path)


def load_snapshot(path) -> Snapshot:
    return Snapshot.load(path)


def _order_text(order) -> str:
    name = type(order).__name__
    if name == "Parallel":
        return "parallel"
    if name == "SingleSiteLexMin":
        return "lexmin"
    return f"random:{order.seed}"


def label_grid(state: CAState, radius: Optional[int] = None) -> str:
    """A 2-d labelling as text, top row first, one space-separated token per cell."""
    if state.d != 2:
        raise ValueError("label grids are two-dimensional")
    if radius is None:
        radius = max((max(abs(c) for c in x) for x in state.labels), default=0)
    rows = [f"# t={state.t} radius={radius}"]
    for y in range(radius, -radius - 1, -1):
        rows.append(" ".join(state[(x, y)] for x in range(-radius, radius + 1)))
    return "\n".join(rows) + "\n"
