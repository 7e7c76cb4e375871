"""Monotone piecewise-linear response curves.

A :class:`Curve` stores a maximal monotone relation between a *level*
(a marginal value, e.g. a price) and a *quantity*, with quantity
nonincreasing in level. It is the derivative graph of a concave
piecewise-quadratic function, turned sideways: ``quantity(level)`` is the
set of maximizers of ``f(q) - level*q``.

Layout: ``lam`` is strictly decreasing; at ``lam[k]`` the quantity spans
``[lo[k], hi[k]]``; between ``lam[k]`` and ``lam[k+1]`` it moves linearly
from ``hi[k]`` to ``lo[k+1]``. Above ``lam[0]`` it is ``lo[0]``, below
``lam[-1]`` it is ``hi[-1]``.

Adding two curves horizontally gives the curve of the sup-convolution of the
underlying concave functions; clipping restricts the domain.

Curves are short (a handful of breakpoints) and queried one level at a
time, so they are kept as plain tuples rather than numpy arrays.
"""
from __future__ import annotations

from bisect import bisect_left

import numpy as np


class Curve:
    __slots__ = ("lam", "lo", "hi", "_neg")

    def __init__(self, lam, lo, hi):
        self.lam = tuple(map(float, lam))
        self.lo = tuple(map(float, lo))
        self.hi = tuple(map(float, hi))
        self._neg = [-v for v in self.lam]

    # -- constructors ---------------------------------------------------
    @classmethod
    def constant(cls, q):
        return cls((0.0,), (q,), (q,))

    @classmethod
    def step(cls, level, q_above, q_below):
        """Flat at ``level``: quantity q_above for higher levels, q_below for lower."""
        if q_above == q_below:
            return cls.constant(q_above)
        return cls((level,), (q_above,), (q_below,))

    @classmethod
    def ramp(cls, level_hi, q_hi_level, level_lo, q_lo_level):
        """Linear from (level_hi, q_hi_level) down to (level_lo, q_lo_level)."""
        if q_hi_level == q_lo_level:
            return cls.constant(q_hi_level)
        if level_hi <= level_lo:
            return cls.step(level_hi, q_hi_level, q_lo_level)
        return cls((level_hi, level_lo), (q_hi_level, q_lo_level), (q_hi_level, q_lo_level))

    # -- queries --------------------------------------------------------
    @property
    def qmin(self):
        return self.lo[0]

    @property
    def qmax(self):
        return self.hi[-1]

    def __len__(self):
        return len(self.lam)

    def __repr__(self):
        return f"Curve(lam={self.lam!r}, lo={self.lo!r}, hi={self.hi!r})"

    def _at(self, level):
        neg = self._neg
        n = len(neg)
        j = bisect_left(neg, -level)
        if j < n and neg[j] == -level:
            return self.lo[j], self.hi[j]
        if j == 0:
            return self.lo[0], self.lo[0]
        if j == n:
            return self.hi[-1], self.hi[-1]
        k = j - 1
        la, lb = self.lam[k], self.lam[j]
        qa, qb = self.hi[k], self.lo[j]
        q = qa + (la - level) / (la - lb) * (qb - qa)
        return q, q

    def at(self, levels):
        """Quantity interval (lo, hi) at a level, or arrays of them for an array of levels."""
        if np.ndim(levels) == 0:
            return self._at(float(levels))
        pairs = [self._at(float(v)) for v in np.ravel(levels)]
        shape = np.shape(levels)
        lo = np.array([a for a, _ in pairs]).reshape(shape)
        hi = np.array([b for _, b in pairs]).reshape(shape)
        return lo, hi

    def level_at(self, q):
        """A level whose quantity set contains ``q``.

        On vertical stretches (one quantity, a range of levels) the highest
        such level is returned. ``q`` must lie in [qmin, qmax].
        """
        qs = []
        ls = []
        for lam, lo, hi in zip(self.lam, self.lo, self.hi):
            qs += (lo, hi)
            ls += (lam, lam)
        j = bisect_left(qs, q)
        if j >= len(qs):
            return ls[-1]
        if qs[j] == q or j == 0:
            return ls[j]
        q0, q1 = qs[j - 1], qs[j]
        l0, l1 = ls[j - 1], ls[j]
        return l0 + (q - q0) / (q1 - q0) * (l1 - l0)

    # -- transforms -----------------------------------------------------
    def scaled(self, level_factor, qty_factor):
        """Curve of (level*level_factor, quantity*qty_factor); both factors > 0."""
        return Curve([v * level_factor for v in self.lam],
                     [v * qty_factor for v in self.lo], [v * qty_factor for v in self.hi])

    def shifted(self, dq):
        return Curve(self.lam, [v + dq for v in self.lo], [v + dq for v in self.hi])

    def clipped(self, qlo, qhi):
        """Restrict quantities to [qlo, qhi]; None if the intersection is empty."""
        if qlo > qhi or qhi < self.lo[0] or qlo > self.hi[-1]:
            return None
        if qlo == qhi:
            return Curve.constant(qlo)
        lam, lo, hi = list(self.lam), self.lo, self.hi
        # crossing levels inside the sloped stretches hi[k] -> lo[k+1]
        extra = []
        for k in range(len(lam) - 1):
            a, b = hi[k], lo[k + 1]
            for bound in (qlo, qhi):
                if a < bound < b:
                    extra.append(lam[k] + (bound - a) / (b - a) * (lam[k + 1] - lam[k]))
        if extra:
            lam = sorted(set(lam).union(extra), reverse=True)
            pairs = [self._at(v) for v in lam]
            lo = [a for a, _ in pairs]
            hi = [b for _, b in pairs]
        lo = [min(max(v, qlo), qhi) for v in lo]
        hi = [min(max(v, qlo), qhi) for v in hi]
        # drop levels inside the flat end runs, keeping the innermost one
        start, stop = 0, len(lam)
        for k in range(len(lam)):
            if hi[k] <= qlo:
                start = k
        for k in range(len(lam) - 1, -1, -1):
            if lo[k] >= qhi:
                stop = k + 1
        return Curve(lam[start:stop], lo[start:stop], hi[start:stop])


def add(*curves):
    """Horizontal sum: quantities add at every level."""
    curves = [c for c in curves if c is not None]
    if len(curves) == 1:
        return curves[0]
    levels = sorted(set().union(*(c.lam for c in curves)), reverse=True)
    lo = [0.0] * len(levels)
    hi = [0.0] * len(levels)
    for c in curves:
        for k, v in enumerate(levels):
            a, b = c._at(v)
            lo[k] += a
            hi[k] += b
    return Curve(levels, lo, hi)
