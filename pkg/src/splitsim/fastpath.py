"""Parallel splitting in floating point with a certified error bound per site.

Each site carries a float mass v and a bound e with |v - exact| <= e.  Shares
are exact (division by 2 or 4), each addition's rounding error is recovered
with TwoSum and added to the bound, and bounds are inflated slightly to cover
the rounding of the bound arithmetic itself.  A threshold decision is taken
only when v - 1 clears the bound; otherwise the run stops with Uncertified.
So every run that finishes has the same toppled set as the exact engine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Set

import numba
import numpy as np

from .lattice import Site
from .numeric import as_fraction

# relative slack for products and sums on the bounds
UP = 1.0 + 2.0 ** -50
DOWN = 1.0 - 2.0 ** -50

STABLE, BUDGET, GROW, AMBIGUOUS = 0, 1, 2, 3


class Uncertified(RuntimeError):
    """A threshold comparison was too close to call within the float error bound."""

    def __init__(self, step: int, site):
        self.step = step
        self.site = site
        super().__init__(f"cannot certify the stability of site {site} at step {step}")


@numba.njit(cache=True)
def _decide(v, e):
    """1 unstable, 0 stable, -1 too close to call."""
    if e == 0.0:
        return 1 if v >= 1.0 else 0
    d = v - 1.0
    if d * DOWN >= e * UP:
        return 1
    if -d * DOWN > e * UP:
        return 0
    return -1


@numba.njit(cache=True)
def _add(m, eps, i, q, qe):
    a = m[i]
    s = a + q
    bb = s - a
    err = (a - (s - bb)) + (q - bb)
    m[i] = s
    eps[i] = (eps[i] + qe + abs(err)) * UP


@numba.njit(cache=True)
def _kernel2(m, eps, top, cnt, lo, hi, max_steps, out):
    L = m.shape[0]
    sm = np.zeros_like(m)
    se = np.zeros_like(m)
    steps = 0
    while steps < max_steps:
        # every unstable site lies in [lo, hi]^2; stop before touching the border
        if lo <= 1 or hi >= L - 2:
            out[0] = steps
            out[3] = lo
            out[4] = hi
            return GROW
        nlo = L
        nhi = -1
        for i in range(lo, hi + 1):
            for j in range(lo, hi + 1):
                r = _decide(m[i, j], eps[i, j])
                if r < 0:
                    out[0] = steps
                    out[1] = i
                    out[2] = j
                    return AMBIGUOUS
                if r == 1:
                    sm[i, j] = m[i, j] * 0.25
                    se[i, j] = eps[i, j] * 0.25
                    m[i, j] = 0.0
                    eps[i, j] = 0.0
                    top[i, j] = True
                    cnt[i, j] += 1
                    if i < nlo:
                        nlo = i
                    if i > nhi:
                        nhi = i
                    if j < nlo:
                        nlo = j
                    if j > nhi:
                        nhi = j
        if nhi < 0:
            out[0] = steps
            return STABLE
        for i in range(nlo, nhi + 1):
            for j in range(nlo, nhi + 1):
                q = sm[i, j]
                qe = se[i, j]
                if q != 0.0 or qe != 0.0:
                    _add2(m, eps, i - 1, j, q, qe)
                    _add2(m, eps, i + 1, j, q, qe)
                    _add2(m, eps, i, j - 1, q, qe)
                    _add2(m, eps, i, j + 1, q, qe)
                    sm[i, j] = 0.0
                    se[i, j] = 0.0
        lo = nlo - 1
        hi = nhi + 1
        steps += 1
    out[0] = steps
    out[3] = lo
    out[4] = hi
    return BUDGET


@numba.njit(cache=True)
def _add2(m, eps, i, j, q, qe):
    a = m[i, j]
    s = a + q
    bb = s - a
    err = (a - (s - bb)) + (q - bb)
    m[i, j] = s
    eps[i, j] = (eps[i, j] + qe + abs(err)) * UP


@numba.njit(cache=True)
def _kernel1(m, eps, top, cnt, lo, hi, max_steps, out):
    L = m.shape[0]
    sm = np.zeros_like(m)
    se = np.zeros_like(m)
    steps = 0
    while steps < max_steps:
        if lo <= 1 or hi >= L - 2:
            out[0] = steps
            out[3] = lo
            out[4] = hi
            return GROW
        nlo = L
        nhi = -1
        for i in range(lo, hi + 1):
            r = _decide(m[i], eps[i])
            if r < 0:
                out[0] = steps
                out[1] = i
                return AMBIGUOUS
            if r == 1:
                sm[i] = m[i] * 0.5
                se[i] = eps[i] * 0.5
                m[i] = 0.0
                eps[i] = 0.0
                top[i] = True
                cnt[i] += 1
                if i < nlo:
                    nlo = i
                nhi = i
        if nhi < 0:
            out[0] = steps
            return STABLE
        for i in range(nlo, nhi + 1):
            if sm[i] != 0.0 or se[i] != 0.0:
                _add(m, eps, i - 1, sm[i], se[i])
                _add(m, eps, i + 1, sm[i], se[i])
                sm[i] = 0.0
                se[i] = 0.0
        lo = nlo - 1
        hi = nhi + 1
        steps += 1
    out[0] = steps
    out[3] = lo
    out[4] = hi
    return BUDGET


def _float_with_bound(x: Fraction):
    """Nearest float to x and an upper bound on the rounding error."""
    v = float(x)
    err = abs(Fraction(v) - x)
    if err == 0:
        return v, 0.0
    return v, math.nextafter(float(err), math.inf)


@dataclass
class FloatRun:
    d: int
    n: Fraction
    h: Fraction
    steps: int
    stabilized: bool
    radius: int                 # array index of the origin along each axis
    mass: np.ndarray
    error: np.ndarray
    toppled_mask: np.ndarray
    split_counts: np.ndarray

    @property
    def toppled(self) -> Set[Site]:
        idx = np.argwhere(self.toppled_mask) - self.radius
        return {tuple(int(c) for c in row) for row in idx}

    @property
    def max_error(self) -> float:
        return float(self.error.max())

    def mass_at(self, x: Site) -> float:
        return float(self.mass[tuple(c + self.radius for c in x)])


def certified_run(d: int, n, h, max_steps: int = 10 ** 7, radius: int = 16) -> FloatRun:
    """Run the parallel order from a point source until stable or out of steps.

    The arrays start at the given radius and are regrown as the active region
    approaches the border.  Raises Uncertified when a decision is too close."""
    if d not in (1, 2):
        raise ValueError("the float path supports d = 1 and d = 2")
    n, h = as_fraction(n), as_fraction(h)
    if h >= 1:
        raise ValueError("background must be below 1")
    hv, he = _float_with_bound(h)
    nv, ne = _float_with_bound(n)
    R = max(radius, 4)
    shape = (2 * R + 1,) * d
    m = np.full(shape, hv)
    eps = np.full(shape, he)
    m[(R,) * d] = nv
    eps[(R,) * d] = ne
    top = np.zeros(shape, dtype=np.bool_)
    cnt = np.zeros(shape, dtype=np.int64)
    lo = hi = R
    steps = 0
    out = np.zeros(5, dtype=np.int64)
    kernel = _kernel2 if d == 2 else _kernel1
    while True:
        code = kernel(m, eps, top, cnt, lo, hi, max_steps - steps, out)
        steps += int(out[0])
        if code == STABLE:
            return FloatRun(d, n, h, steps, True, R, m, eps, top, cnt)
        if code == BUDGET:
            return FloatRun(d, n, h, steps, False, R, m, eps, top, cnt)
        if code == AMBIGUOUS:
            site = tuple(int(out[k]) - R for k in range(1, 1 + d))
            raise Uncertified(steps, site)
        # grow: re-centre into an array twice as wide
        lo, hi = int(out[3]), int(out[4])
        R2 = 2 * R
        shape2 = (2 * R2 + 1,) * d
        pad = R2 - R
        m2 = np.full(shape2, hv)
        eps2 = np.full(shape2, he)
        top2 = np.zeros(shape2, dtype=np.bool_)
        cnt2 = np.zeros(shape2, dtype=np.int64)
        inner = tuple(slice(pad, pad + 2 * R + 1) for _ in range(d))
        m2[inner] = m
        eps2[inner] = eps
        top2[inner] = top
        cnt2[inner] = cnt
        m, eps, top, cnt, R = m2, eps2, top2, cnt2, R2
        lo, hi = lo + pad, hi + pad
