"""Diagnostics for finished runs: limiting-shape checks, ball bounds, Green's
function tables, odometer identities, and the constants behind the regimes."""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from sympy import factorint

from .engine import (BudgetExhausted, CertifiedExplosive, Evolution, Parallel, Stabilized,
                     parse_order)
from .lattice import Region, Site, neighbor_fn, origin
from .numeric import AffineMass, HInterval, as_fraction, format_fraction, nonneg_on, positive_on

F = Fraction


class NotStabilized(ValueError):
    """The check needs a stabilized run."""


class NonConvergence(RuntimeError):
    """The Green's function relaxation hit its iteration cap."""


class PathStuck(RuntimeError):
    """The greedy path stopped increasing before it reached the origin."""


def _final(state) -> Evolution:
    if isinstance(state, Stabilized):
        return state.final
    if isinstance(state, (BudgetExhausted, CertifiedExplosive)):
        raise NotStabilized(f"run did not stabilize: {type(state).__name__}")
    if isinstance(state, Evolution):
        if state.unstable_sites():
            raise NotStabilized("run still has unstable sites")
        return state
    raise TypeError(f"expected a run outcome, got {type(state).__name__}")


def _region(T) -> Region:
    if isinstance(T, (set, frozenset)):
        return T
    if isinstance(T, Stabilized):
        return T.final.toppled
    if isinstance(T, Evolution):
        return T.toppled
    if isinstance(T, (BudgetExhausted, CertifiedExplosive)):
        raise NotStabilized(f"run did not stabilize: {type(T).__name__}")
    return set(T)


# ---- exact signs of sums of square roots ----

def _squarefree(s: Fraction) -> Tuple[Fraction, int]:
    """sqrt(s) = k * sqrt(m) with k rational and m a squarefree integer."""
    num = s.numerator * s.denominator
    k, m = 1, 1
    for p, e in factorint(num).items():
        k *= p ** (e // 2)
        m *= p ** (e % 2)
    return F(k, s.denominator), m


def _reduce(terms) -> Dict[int, Fraction]:
    """Coefficients keyed by squarefree radicand."""
    out: Dict[int, Fraction] = {}
    for c, s in terms:
        if c and s:
            k, m = _squarefree(F(s))
            out[m] = out.get(m, 0) + c * k
    return {m: c for m, c in out.items() if c}


def _collect(terms) -> List[Tuple[Fraction, Fraction]]:
    return [(c, F(m)) for m, c in _reduce(terms).items()]


def _sign(terms: Dict[int, Fraction]) -> int:
    if not terms:
        return 0
    if set(terms) == {1}:
        v = terms[1]
        return (v > 0) - (v < 0)
    # write the sum as A + B sqrt(p) with p the largest prime under any radical;
    # A and B involve only smaller primes
    p = max(q for m in terms for q in factorint(m))
    A = {m: c for m, c in terms.items() if m % p}
    B = {m // p: c for m, c in terms.items() if not m % p}
    sa, sb = _sign(A), _sign(B)
    if sa == 0 or sb == 0 or sa == sb:
        return sa or sb
    # opposite signs: compare A^2 with p B^2
    sq = [(a * b, F(m * n)) for m, a in A.items() for n, b in A.items()]
    sq += [(-p * a * b, F(m * n)) for m, a in B.items() for n, b in B.items()]
    diff = _sign(_reduce(sq))
    return sa if diff > 0 else sb if diff < 0 else 0


def surd_sign(terms: Sequence[Tuple[Fraction, Fraction]]) -> int:
    """Sign of sum(c * sqrt(s)) for rationals c and s >= 0, decided exactly."""
    return _sign(_reduce(terms))


def _surd_float(terms) -> float:
    return sum(float(c) * math.sqrt(float(s)) for c, s in terms)


def _compare(terms, value: Fraction) -> int:
    """sign(sum(terms) - value), with a float filter before the exact test."""
    approx = _surd_float(terms) - float(value)
    if abs(approx) > 1e-9 * (1 + abs(float(value))):
        return 1 if approx > 0 else -1
    return surd_sign(list(terms) + [(-value, F(1))])


# ---- polygons ----

Point = Tuple[Fraction, Fraction]


@dataclass(frozen=True)
class Polygon:
    """A convex polygon given by its vertices in counter-clockwise order."""

    name: str
    vertices: Tuple[Point, ...]

    def edges(self) -> List[Tuple[Fraction, Fraction, Fraction]]:
        """Half-planes nx*x + ny*y <= c, one per edge, outward normals."""
        out = []
        vs = self.vertices
        for i, (x0, y0) in enumerate(vs):
            x1, y1 = vs[(i + 1) % len(vs)]
            nx, ny = y1 - y0, x0 - x1
            out.append((nx, ny, nx * x0 + ny * y0))
        return out

    def contains(self, p: Point) -> bool:
        return all(nx * p[0] + ny * p[1] <= c for nx, ny, c in self.edges())

    def sq_distance(self, p: Point) -> Fraction:
        """Squared Euclidean distance from p to the polygon (0 inside)."""
        if self.contains(p):
            return F(0)
        best = None
        vs = self.vertices
        for i, a in enumerate(vs):
            b = vs[(i + 1) % len(vs)]
            dx, dy = b[0] - a[0], b[1] - a[1]
            t = ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / (dx * dx + dy * dy)
            t = min(max(t, F(0)), F(1))
            qx, qy = a[0] + t * dx - p[0], a[1] + t * dy - p[1]
            d2 = qx * qx + qy * qy
            if best is None or d2 < best:
                best = d2
        return best

    def sq_depth(self, p: Point) -> Fraction:
        """Squared distance from an inside point p to the complement (0 outside)."""
        best = None
        for nx, ny, c in self.edges():
            slack = c - nx * p[0] - ny * p[1]
            if slack <= 0:
                return F(0)
            d2 = slack * slack / (nx * nx + ny * ny)
            if best is None or d2 < best:
                best = d2
        return best

    def max_coordinate(self) -> Fraction:
        return max(max(abs(x), abs(y)) for x, y in self.vertices)

    def is_symmetric(self) -> bool:
        vs = set(self.vertices)
        return all((sx * a, sy * b) in vs and (sx * b, sy * a) in vs
                   for x, y in vs for sx in (1, -1) for sy in (1, -1) for a, b in [(x, y)])


def _symmetric_polygon(name: str, first_octant: Sequence[Point]) -> Polygon:
    pts = set()
    for x, y in first_octant:
        for a, b in ((x, y), (y, x)):
            for sx, sy in itertools.product((1, -1), repeat=2):
                pts.add((sx * F(a), sy * F(b)))
    ordered = sorted(pts, key=lambda p: math.atan2(p[1], p[0]))
    return Polygon(name, tuple(ordered))


DIAMOND = _symmetric_polygon("D", [(0, 1)])
SQUARE = _symmetric_polygon("Q", [(1, 1)])
OCTAGON = _symmetric_polygon("O", [(0, 1), (F(5, 6), F(5, 6))])
POLYGONS = {"D": DIAMOND, "Q": SQUARE, "O": OCTAGON,
            "diamond": DIAMOND, "square": SQUARE, "octagon": OCTAGON}


class _Inset:
    """The inner eps-neighbourhood of a convex polygon, with exact surd coordinates."""

    def __init__(self, S: Polygon, eps: Fraction):
        self.S = S
        self.eps = eps
        self.edges = S.edges()
        self.shift = [(c, -eps, nx * nx + ny * ny) for nx, ny, c in self.edges]
        verts = []
        m = len(self.edges)
        for j in range(m):
            i = (j - 1) % m
            (ax, ay, ac), (bx, by, bc) = self.edges[i], self.edges[j]
            det = ax * by - ay * bx
            Na, Nb = ax * ax + ay * ay, bx * bx + by * by
            # the shifted lines a.x = ac - eps*sqrt(Na) and b.x = bc - eps*sqrt(Nb)
            x = [((ac * by - bc * ay) / det, F(1)), (-eps * by / det, Na), (eps * ay / det, Nb)]
            y = [((ax * bc - bx * ac) / det, F(1)), (-eps * ax / det, Nb), (eps * bx / det, Na)]
            verts.append((_collect(x), _collect(y)))
        self.vertices = verts
        self.empty = False
        for vx, vy in verts:
            for nx, ny, c in self.edges:
                terms = [(nx * a, s) for a, s in vx] + [(ny * a, s) for a, s in vy]
                N = nx * nx + ny * ny
                if surd_sign(terms + [(-c, F(1)), (eps, N)]) > 0:
                    self.empty = True
        # projections of the inset polygon on each test axis, as surd expressions
        self.axes = [(F(1), F(0)), (F(0), F(1))] + [(nx, ny) for nx, ny, _ in self.edges]
        self.extent = []
        for ax, ay in self.axes:
            projs = [_collect([(ax * a, s) for a, s in vx] + [(ay * a, s) for a, s in vy])
                     for vx, vy in verts]
            lo = min(projs, key=_surd_float)
            hi = max(projs, key=_surd_float)
            # float order is only a hint; fix it up exactly
            for p in projs:
                if surd_sign(p + [(-c, s) for c, s in lo]) < 0:
                    lo = p
                if surd_sign(p + [(-c, s) for c, s in hi]) > 0:
                    hi = p
            self.extent.append((lo, hi))
        self.extent_f = [(_surd_float(lo), _surd_float(hi)) for lo, hi in self.extent]

    def meets_open_box(self, lo: Point, hi: Point) -> bool:
        """Does the open box (lo, hi) intersect the inset polygon?  Separating axes."""
        if self.empty:
            return False
        corners = [(lo[0], lo[1]), (lo[0], hi[1]), (hi[0], lo[1]), (hi[0], hi[1])]
        fcorners = [(float(x), float(y)) for x, y in corners]
        close = []
        for k, (ax, ay) in enumerate(self.axes):
            fx, fy = float(ax), float(ay)
            vals = [fx * x + fy * y for x, y in fcorners]
            flo, fhi = self.extent_f[k]
            tol = 1e-9 * (1 + abs(flo) + abs(fhi) + max(map(abs, vals)))
            if fhi < min(vals) - tol or flo > max(vals) + tol:
                return False
            if fhi <= min(vals) + tol or flo >= max(vals) - tol:
                close.append(k)
        # only axes where the float test was too close to call need exact arithmetic
        for k in close:
            ax, ay = self.axes[k]
            plo, phi = self.extent[k]
            vals = [ax * x + ay * y for x, y in corners]
            if _compare(phi, min(vals)) <= 0 or _compare(plo, max(vals)) >= 0:
                return False
        return True


@dataclass
class ShapeVerdict:
    inner_ok: bool
    outer_ok: bool
    worst_inner_gap: Fraction        # squared depth in S of the deepest missing cube centre
    worst_outer_excess: Fraction     # max squared distance to S of a cube corner, minus eps^2
    missing: List[Site] = field(default_factory=list)
    outside: List[Site] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.inner_ok and self.outer_ok

    def summary(self) -> str:
        return (f"inner_ok={self.inner_ok} outer_ok={self.outer_ok} "
                f"inner_gap_sq={format_fraction(self.worst_inner_gap)} "
                f"outer_excess_sq={format_fraction(self.worst_outer_excess)} "
                f"missing={len(self.missing)} outside={len(self.outside)}")


def shape_check(T, f_t, S: Polygon, eps) -> ShapeVerdict:
    """Test S_eps inside f_t*(T + C) inside S^eps exactly, with C the unit cube around 0.

    Outer: every corner of every scaled cube lies within distance eps of S.
    Inner: every site whose open scaled cube meets S_eps is in T."""
    T = _region(T)
    f = as_fraction(f_t)
    eps = as_fraction(eps)
    if f <= 0 or eps <= 0:
        raise ValueError("scale and eps must be positive")
    if any(len(x) != 2 for x in T):
        raise ValueError("polygon targets need d=2; use l1_shape_check for diamonds in any d")
    half = F(1, 2)
    eps2 = eps * eps
    corners = set()
    for x, y in T:
        for dx in (-1, 1):
            for dy in (-1, 1):
                corners.add((2 * x + dx, 2 * y + dy))     # doubled coordinates
    edges = S.edges()
    worst_out = None
    bad_corners = set()
    for cx, cy in corners:
        p = (f * cx / 2, f * cy / 2)
        # float filter: clearly inside S
        fx, fy = float(p[0]), float(p[1])
        if all(float(nx) * fx + float(ny) * fy <= float(c) - 1e-9 for nx, ny, c in edges):
            d2 = F(0)
        else:
            d2 = S.sq_distance(p)
        excess = d2 - eps2
        if worst_out is None or excess > worst_out:
            worst_out = excess
        if excess > 0:
            bad_corners.add((cx, cy))
    outside = sorted({(x, y) for x, y in T
                      if any((2 * x + dx, 2 * y + dy) in bad_corners for dx in (-1, 1) for dy in (-1, 1))})
    inset = _Inset(S, eps)
    R = int(math.ceil(S.max_coordinate() / f)) + 1
    missing = []
    worst_in = F(0)
    for x in range(-R, R + 1):
        for y in range(-R, R + 1):
            if (x, y) in T:
                continue
            lo = (f * (x - half), f * (y - half))
            hi = (f * (x + half), f * (y + half))
            if inset.meets_open_box(lo, hi):
                missing.append((x, y))
                worst_in = max(worst_in, S.sq_depth((f * x, f * y)))
    return ShapeVerdict(not missing, not outside, worst_in,
                        worst_out if worst_out is not None else -eps2, missing, outside)


def l1_shape_check(T, f_t, eps) -> ShapeVerdict:
    """The diamond test in any dimension, with eps-neighbourhoods taken in the L1 metric:
    outer means every scaled cube lies in |x|_1 <= 1 + eps, inner means every site whose
    open scaled cube meets |x|_1 <= 1 - eps is in T."""
    T = _region(T)
    f = as_fraction(f_t)
    eps = as_fraction(eps)
    if not T:
        return ShapeVerdict(eps >= 1, True, F(0), F(0))
    d = len(next(iter(T)))
    half = F(1, 2)
    outside = []
    worst_out = None
    for x in T:
        far = f * (sum(abs(c) for c in x) + d * half)
        excess = far - 1 - eps
        worst_out = excess if worst_out is None or excess > worst_out else worst_out
        if excess > 0:
            outside.append(x)
    R = int(math.ceil(1 / f)) + d
    missing = []
    worst_in = F(0)
    for y in itertools.product(range(-R, R + 1), repeat=d):
        if y in T:
            continue
        near = f * sum(max(abs(c) - half, F(0)) for c in y)
        if near < 1 - eps:
            missing.append(y)
            worst_in = max(worst_in, 1 - f * sum(abs(c) for c in y))
    return ShapeVerdict(not missing, not outside, worst_in, worst_out, sorted(missing), sorted(outside))


# ---- ball bounds ----

def unit_ball_volume(d: int):
    """Volume of the Euclidean unit ball in R^d at 30 significant digits."""
    import mpmath
    with mpmath.workdps(30):
        return mpmath.pi ** (mpmath.mpf(d) / 2) / mpmath.gamma(mpmath.mpf(d) / 2 + 1)


@dataclass
class BallReport:
    d: int
    h: Fraction
    n: Fraction
    r: float
    c1: float
    c2_obs: Optional[float]
    c1p: Optional[float]
    c2p_obs: Optional[float]
    inner_sq: Optional[int]           # B_rho is inside T exactly when rho^2 < inner_sq
    outer_sq: int                     # T is inside B_rho exactly when rho^2 >= outer_sq
    note: str = ""

    def csv_row(self) -> List[str]:
        def fmt(v):
            return "" if v is None else repr(float(v))
        return [str(self.d), format_fraction(self.h), format_fraction(self.n), fmt(self.r), fmt(self.c1),
                fmt(self.c2_obs), fmt(self.c1p), fmt(self.c2p_obs)]


BALL_CSV_HEADER = ["d", "h", "n", "r", "c1", "c2_obs", "c1p", "c2p_obs"]


def ball_bounds_check(T, n, h, d: int, eps) -> BallReport:
    """Observed constants in B_{c1 r - c2} inside T inside B_{c1' r + c2'}.

    The radii are found exactly: inner_sq is the smallest squared norm of a lattice
    site outside T (every site strictly closer is in T), outer_sq the largest squared
    norm inside T.  The constants themselves involve irrational r and c1."""
    import mpmath
    T = _region(T)
    n, h, eps = as_fraction(n), as_fraction(h), as_fraction(eps)
    with mpmath.workdps(30):
        omega = unit_ball_volume(d)
        r = (mpmath.mpf(n.numerator) / n.denominator / omega) ** (mpmath.mpf(1) / d)
        c1 = (1 - mpmath.mpf(h.numerator) / h.denominator) ** (-mpmath.mpf(1) / d)
        if not T:
            return BallReport(d, h, n, float(r), float(c1), None, None, None, None, 0,
                              note="T is empty; the inner bound is vacuous")
        outer_sq = max(sum(c * c for c in x) for x in T)
        # smallest squared norm outside T: scan shells up to the outer radius
        R = math.isqrt(outer_sq) + 2
        inner_sq = None
        for x in itertools.product(range(-R, R + 1), repeat=d):
            if x not in T:
                s = sum(c * c for c in x)
                if inner_sq is None or s < inner_sq:
                    inner_sq = s
        c2 = c1 * r - mpmath.sqrt(inner_sq)
        c1p = c2p = None
        note = ""
        if h < 0:
            base = F(1, 2) - eps - h
            if base <= 0:
                raise ValueError("need 1/2 - eps - h > 0")
            c1p = (mpmath.mpf(base.numerator) / base.denominator) ** (-mpmath.mpf(1) / d)
            c2p = mpmath.sqrt(outer_sq) - c1p * r
        else:
            note = "outer bound only applies for h < 0"
        return BallReport(d, h, n, float(r), float(c1), float(c2),
                          None if c1p is None else float(c1p), None if c2p is None else float(c2p),
                          inner_sq, outer_sq, note)


def margins_bounded(values: Sequence[float], factor: float = 2.0) -> bool:
    """Whether the constants needed for a family of inclusions stay within a fixed factor.

    A negative observed margin means the inclusion already holds with constant 0, so
    each margin is clamped at 0 and the smallest is floored at one lattice unit."""
    need = [max(v, 0.0) for v in values]
    if not need:
        return True
    return max(need) <= factor * max(min(need), 1.0)


def ball_family_check(reports: Sequence[BallReport], factor: float = 2.0) -> Tuple[bool, bool]:
    """Boundedness of the inner and outer margins across runs of growing n."""
    inner = [r.c2_obs for r in reports if r.c2_obs is not None]
    outer = [r.c2p_obs for r in reports if r.c2p_obs is not None]
    return margins_bounded(inner, factor), margins_bounded(outer, factor)


# ---- Green's function ----

@dataclass
class GreenTable:
    """Numerical solution of Laplacian(g) = -delta_0 on the box of the given radius.

    For d=2 the additive constant is fixed by g(0) = 0; for d >= 3, g decays at infinity
    and g(0) is the expected number of visits to the origin, counting time 0."""

    d: int
    radius: int
    grid: np.ndarray
    tolerance: Fraction
    max_residual: float
    iterations: int

    def _index(self, x: Site):
        return tuple(c + self.radius for c in x)

    def __call__(self, x: Site) -> float:
        if any(abs(c) > self.radius for c in x):
            raise KeyError(f"{x} outside the table")
        return float(self.grid[self._index(x)])

    def value(self, x: Site) -> Fraction:
        return Fraction(self(x))

    @property
    def values(self) -> Dict[Site, Fraction]:
        R = self.radius
        return {x: Fraction(float(self.grid[self._index(x)]))
                for x in itertools.product(range(-R, R + 1), repeat=self.d)}

    def laplacian(self, x: Site) -> float:
        s = sum(self(y) for y in neighbor_fn(self.d)(x))
        return s / (2 * self.d) - self(x)

    def residuals(self) -> np.ndarray:
        return _residual(self.grid, self.d)


def _neighbour_mean(g: np.ndarray, d: int) -> np.ndarray:
    inner = tuple(slice(1, -1) for _ in range(d))
    acc = np.zeros(tuple(s - 2 for s in g.shape))
    for axis in range(d):
        for shift in (0, 2):
            sl = list(inner)
            sl[axis] = slice(shift, g.shape[axis] - 2 + shift)
            acc += g[tuple(sl)]
    return acc / (2 * d)


def _residual(g: np.ndarray, d: int) -> np.ndarray:
    """|Laplacian(g) + delta_0| on the interior of the box."""
    inner = tuple(slice(1, -1) for _ in range(d))
    res = _neighbour_mean(g, d) - g[inner]
    c = tuple(s // 2 - 1 for s in g.shape)
    res[c] += 1.0
    return np.abs(res)


def green_asymptotic(d: int, x) -> float:
    """Leading term of g far from the origin (d=2 up to an additive constant)."""
    rr = math.sqrt(sum(c * c for c in x))
    if d == 2:
        return -(2 / math.pi) * math.log(rr)
    coef = d * math.gamma(d / 2 - 1) / (2 * math.pi ** (d / 2))
    return coef * rr ** (2 - d)


def compute_green(d: int, radius: int, tol=Fraction(1, 10 ** 8), max_iter: int = 200000) -> GreenTable:
    """Red-black over-relaxation with boundary values from the far-field asymptotics."""
    if d < 2:
        raise ValueError("the Green's function table needs d >= 2")
    if radius < 10:
        raise ValueError("radius must be at least 10")
    tol = as_fraction(tol)
    L = 2 * radius + 1
    idx = np.indices((L,) * d) - radius
    rr = np.sqrt((idx ** 2).sum(axis=0))
    g = np.zeros((L,) * d)
    border = np.zeros((L,) * d, dtype=bool)
    for axis in range(d):
        border |= (idx[axis] == -radius) | (idx[axis] == radius)
    if d == 2:
        g[border] = -(2 / math.pi) * np.log(rr[border])
    else:
        coef = d * math.gamma(d / 2 - 1) / (2 * math.pi ** (d / 2))
        g[border] = coef * rr[border] ** (2 - d)
    parity = idx.sum(axis=0) % 2
    inner = tuple(slice(1, -1) for _ in range(d))
    masks = [(parity[inner] == p) for p in (0, 1)]
    source = np.zeros_like(g[inner])
    source[(radius - 1,) * d] = 1.0
    rho = math.cos(math.pi / (L - 1))
    omega = 2 / (1 + math.sqrt(1 - rho * rho))
    tol_f = float(tol)
    it = 0
    res = math.inf
    while it < max_iter:
        for m in masks:
            target = _neighbour_mean(g, d) + source
            view = g[inner]
            view[m] += omega * (target[m] - view[m])
        it += 1
        if it % 25 == 0:
            res = float(_residual(g, d).max())
            if res <= tol_f:
                break
    else:
        raise NonConvergence(f"residual {res:.3e} after {max_iter} sweeps")
    if d == 2:
        g -= g[(radius,) * d]
    res = float(_residual(g, d).max())
    return GreenTable(d, radius, g, tol, res, it)


# ---- odometer diagnostics ----

def _laplacian_affine(u: Dict[Site, AffineMass], x: Site, nb, k: int) -> AffineMass:
    zero = AffineMass()
    tot = zero
    for y in nb(x):
        tot = tot + u.get(y, zero)
    return tot / k - u.get(x, zero)


def odometer_laplacian_check(state, n, h=None) -> bool:
    """Laplacian(u)(x) + (n - h) delta_0 = eta_final(x) - h < 1 - h on T and its boundary,
    and eta_final(x) - h >= -h on T.  Checked symbolically over the run's h-range."""
    evo = _final(state)
    n = n if isinstance(n, AffineMass) else AffineMass.const(n)
    I = evo.h_interval
    if h is not None and not isinstance(h, HInterval):
        I = HInterval.point(h)
    hh = AffineMass(0, 1)
    u = evo.odometer
    nb = neighbor_fn(evo.d)
    k = 2 * evo.d
    o = origin(evo.d)
    T = evo.toppled
    sites = set(T)
    for x in T:
        sites.update(nb(x))
    for x in sites:
        lhs = _laplacian_affine(u, x, nb, k)
        if x == o:
            lhs = lhs + n - hh
        final = evo.mass(x)
        diff = lhs - (final - hh)
        if I.is_point:
            if diff(I.lo) != 0:
                return False
        elif not diff.is_zero():
            return False
        # strictly below 1 - h, i.e. the final mass is below 1
        if not positive_on(AffineMass(1, 0) - final, I):
            return False
        if x in T and not nonneg_on(final, I):
            return False
    return True


@dataclass
class PathReport:
    start: Site
    path: List[Site]
    increments: List[Fraction]
    bound: Fraction

    @property
    def length(self) -> int:
        return len(self.path) - 1


def _point_odometer(evo: Evolution, h: Fraction) -> Dict[Site, Fraction]:
    return {x: m(h) for x, m in evo.odometer.items()}


def boundary_adjacent_sites(T: Region, d: int) -> List[Site]:
    nb = neighbor_fn(d)
    return sorted(x for x in T if any(y not in T for y in nb(x)))


def greedy_increasing_path(state, h, start: Optional[Site] = None) -> PathReport:
    """Follow the neighbour with the largest odometer (never stepping back, ties broken
    lexicographically) until the origin; every step must raise u by more than
    -(2d/(2d-1)) h."""
    evo = _final(state)
    h = as_fraction(h)
    if h >= 0:
        raise ValueError("the increasing path needs h < 0")
    d = evo.d
    T = evo.toppled
    o = origin(d)
    bound = -F(2 * d, 2 * d - 1) * h
    if not T or T == {o}:
        return PathReport(o, [o], [], bound)
    u = _point_odometer(evo, h)
    if start is None:
        start = boundary_adjacent_sites(T, d)[0]
    if start not in T:
        raise ValueError("the path must start inside T")
    nb = neighbor_fn(d)
    path = [start]
    incs = []
    prev = None
    x = start
    while x != o:
        cands = [y for y in nb(x) if y != prev]
        best = max(u.get(y, F(0)) for y in cands)
        y = min(c for c in cands if u.get(c, F(0)) == best)
        inc = best - u.get(x, F(0))
        if inc <= bound or len(path) > len(T):
            raise PathStuck(f"at {x}: best neighbour {y} raises u by {inc}, need more than {bound}")
        incs.append(inc)
        prev, x = x, y
        path.append(x)
    return PathReport(start, path, incs, bound)


def box_average_check(state, k: int, n, h) -> bool:
    """Laplacian of the box average over Q_k(x) is at least
    k/(2k+1) - h - (n-h)/(2k+1)^d [0 in Q_k(x)] wherever Q_k(x) lies in T."""
    evo = _final(state)
    h, n = as_fraction(h), as_fraction(n)
    d = evo.d
    T = evo.toppled
    u = _point_odometer(evo, h)
    nb = neighbor_fn(d)
    side = 2 * k + 1
    vol = side ** d
    lap = {}

    def lap_u(y):
        v = lap.get(y)
        if v is None:
            v = lap[y] = sum((u.get(z, F(0)) for z in nb(y)), F(0)) / (2 * d) - u.get(y, F(0))
        return v

    offsets = list(itertools.product(range(-k, k + 1), repeat=d))
    base = F(k, side) - h
    for x in T:
        box = [tuple(a + b for a, b in zip(x, off)) for off in offsets]
        if not all(y in T for y in box):
            continue
        val = sum((lap_u(y) for y in box), F(0)) / vol
        rhs = base
        if all(abs(c) <= k for c in x):
            rhs -= (n - h) / vol
        if val < rhs:
            return False
    return True


def superharmonicity_check(state, n, h, green: GreenTable) -> Tuple[bool, float]:
    """Laplacian of u - ((1-h)|x|^2 + (n-h) g) should be negative everywhere; returns
    (holds up to the table tolerance, largest value seen) over sites the table covers."""
    evo = _final(state)
    h, n = as_fraction(h), as_fraction(n)
    d = evo.d
    nb = neighbor_fn(d)
    u = _point_odometer(evo, h)
    sites = set(evo.toppled)
    for x in evo.toppled:
        sites.update(nb(x))
    worst = -math.inf
    R = green.radius - 1
    for x in sites:
        if any(abs(c) > R for c in x):
            continue
        lap_u = float(sum((u.get(y, F(0)) for y in nb(x)), F(0)) / (2 * d) - u.get(x, F(0)))
        # the Laplacian of |x|^2 is exactly 1
        val = lap_u - float(1 - h) - float(n - h) * green.laplacian(x)
        worst = max(worst, val)
    slack = float(n - h) * float(green.tolerance) * 4
    return worst < slack, worst


# ---- theory constants and regimes ----

@dataclass(frozen=True)
class TheoryConstants:
    d: int
    p_d: Fraction
    q_d: Fraction
    h_star: Fraction
    C_d_prime: Fraction
    h_star_displayed: Fraction        # the closed form (q - 2d)/(p + 2d), kept for comparison

    def lines(self) -> List[str]:
        return [f"d={self.d}", f"p={format_fraction(self.p_d)}", f"q={format_fraction(self.q_d)}",
                f"h*={format_fraction(self.h_star)}", f"C'={format_fraction(self.C_d_prime)}",
                f"h*_closed_form={format_fraction(self.h_star_displayed)}"]


def theory_constants(d: int) -> TheoryConstants:
    if d < 2:
        raise ValueError("the constants are defined for d >= 2")
    k = 2 * d
    fact = math.factorial(d)
    p = F(fact, k ** d) * sum(F(k ** l, math.factorial(l)) for l in range(2, d + 1))
    q = F(fact, k ** (d - 1))
    # solve q + p h = 2d (1 - h)
    h_star = (k - q) / (p + k)
    C = max(1 - F(1, d), h_star)
    return TheoryConstants(d, p, q, h_star, C, (q - k) / (p + k))


class Robust:
    def __str__(self):
        return "Robust"


class Explosive:
    def __init__(self, reason: str = ""):
        self.reason = reason

    def __str__(self):
        return "Explosive"


class Unknown:
    def __str__(self):
        return "Unknown"


def certified_regime(h, d: int, order=None):
    """What is proven about background h: Robust below 1/2, Explosive from 1 - 1/(2d)
    for any order, and for the parallel order from 13/19 (d=2) or C'_d (d >= 3)."""
    h = as_fraction(h)
    order = order if order is not None else Parallel()
    if isinstance(order, str):
        order = parse_order(order)
    if h >= 1:
        raise ValueError("background must be below 1")
    if h < F(1, 2):
        return Robust()
    if h >= 1 - F(1, 2 * d):
        return Explosive("h >= 1 - 1/(2d)")
    if isinstance(order, Parallel):
        if d == 2 and h >= F(13, 19):
            return Explosive("d=2, h >= 13/19, parallel order")
        if d >= 3 and h >= theory_constants(d).C_d_prime:
            return Explosive("h >= C'_d, parallel order")
    return Unknown()


@dataclass
class ScanRow:
    d: int
    h: Fraction
    n: Fraction
    order: str
    verdict: str
    size: Optional[int]
    steps: Optional[int]
    series: List[Tuple[int, int]] = field(default_factory=list)

    def csv_row(self) -> List[str]:
        return [str(self.d), format_fraction(self.h), format_fraction(self.n), self.order, self.verdict,
                "" if self.size is None else str(self.size), "" if self.steps is None else str(self.steps)]


SCAN_CSV_HEADER = ["d", "h", "n", "order", "verdict", "|T|", "steps"]


def _order_name(order) -> str:
    if isinstance(order, Parallel):
        return "parallel"
    if hasattr(order, "seed"):
        return f"random:{order.seed}"
    return "lexmin"


def regime_scan(d: int, h_grid: Iterable, n_grid: Iterable, max_steps: int = 2000,
                max_radius: Optional[int] = None, order=None) -> List[ScanRow]:
    """One row per (h, n), in grid order.  Certified explosive points are not simulated;
    everything else is run within the budgets and reported as observed."""
    order = order if order is not None else Parallel()
    if isinstance(order, str):
        order = parse_order(order)
    rows = []
    for h in h_grid:
        h = as_fraction(h)
        regime = certified_regime(h, d, order)
        for n in n_grid:
            n = as_fraction(n)
            if isinstance(regime, Explosive):
                rows.append(ScanRow(d, h, n, _order_name(order), "Explosive(certified)", None, None))
                continue
            evo = Evolution(d, n, h, order)
            out = evo.run(max_steps, max_radius, shortcut=False)
            if isinstance(out, Stabilized):
                verdict = "Robust;Stabilized" if isinstance(regime, Robust) else "Stabilized"
                rows.append(ScanRow(d, h, n, _order_name(order), verdict, len(evo.toppled), evo.t))
            else:
                series = out.diagnostics.get("series", [])
                rows.append(ScanRow(d, h, n, _order_name(order), "BudgetExhausted", len(evo.toppled), evo.t,
                                    series))
    return rows


def scan_csv(rows: Sequence[ScanRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCAN_CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_row())
    return buf.getvalue()


def growth_trend(series: Sequence[Tuple[int, int]]) -> List[Tuple[int, Fraction]]:
    """|T_t| / t along a run, the growth-rate diagnostic for runs that did not stop."""
    return [(t, F(size, t)) for t, size in series if t > 0]
