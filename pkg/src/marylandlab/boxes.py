"""Finite lattice boxes with a fixed lexicographic site indexing.

Sites are tuples of ints. The index bijection is lexicographic with the
first coordinate most significant, so translating a box does not permute
the stored order of its sites.
"""

from __future__ import annotations

import itertools

import numpy as np


def as_site(n):
    """Normalize ints / sequences to a site tuple."""
    if isinstance(n, (int, np.integer)):
        return (int(n),)
    return tuple(int(c) for c in n)


def l1_dist(m, n):
    return int(sum(abs(a - b) for a, b in zip(m, n)))


def set_dist(n, sites):
    """l1 distance from a site to a finite site set (0 if inside)."""
    return min(l1_dist(n, m) for m in sites)


class LatticeBox:
    """Product box [lo_1, hi_1] x ... x [lo_d, hi_d] of Z^d, bounds inclusive."""

    def __init__(self, lo, hi):
        lo = as_site(lo)
        hi = as_site(hi)
        if len(lo) != len(hi):
            raise ValueError("lo and hi have different dimensions")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"empty box: lo={lo}, hi={hi}")
        self.lo = lo
        self.hi = hi
        self.d = len(lo)
        self._widths = tuple(b - a + 1 for a, b in zip(lo, hi))
        self.size = int(np.prod(self._widths))
        # strides for lexicographic index, first coordinate most significant
        strides = [1] * self.d
        for i in range(self.d - 2, -1, -1):
            strides[i] = strides[i + 1] * self._widths[i + 1]
        self._strides = tuple(strides)

    @classmethod
    def interval(cls, lo, hi):
        """1d convenience constructor."""
        return cls((lo,), (hi,))

    def sites(self):
        """All sites in index order, as an (N, d) int array."""
        ranges = [np.arange(a, b + 1) for a, b in zip(self.lo, self.hi)]
        grids = np.meshgrid(*ranges, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def site_tuples(self):
        return [tuple(int(c) for c in row) for row in self.sites()]

    def index(self, n):
        n = as_site(n)
        if n not in self:
            raise KeyError(f"site {n} outside box {self}")
        return sum(s * (c - a) for s, c, a in zip(self._strides, n, self.lo))

    def site(self, i):
        if not 0 <= i < self.size:
            raise IndexError(i)
        out = []
        for s, a in zip(self._strides, self.lo):
            out.append(a + i // s)
            i %= s
        return tuple(out)

    def __contains__(self, n):
        n = as_site(n)
        return len(n) == self.d and all(a <= c <= b for a, c, b in zip(self.lo, n, self.hi))

    def __iter__(self):
        return iter(self.site_tuples())

    def __len__(self):
        return self.size

    def __eq__(self, other):
        return isinstance(other, LatticeBox) and self.lo == other.lo and self.hi == other.hi

    def __hash__(self):
        return hash((self.lo, self.hi))

    def __repr__(self):
        if self.d == 1:
            return f"LatticeBox[{self.lo[0]}..{self.hi[0]}]"
        return f"LatticeBox[{self.lo}..{self.hi}]"

    def shifted(self, a):
        a = as_site(a)
        return LatticeBox(tuple(l + s for l, s in zip(self.lo, a)),
                          tuple(h + s for h, s in zip(self.hi, a)))

    def union_box(self, other):
        """Smallest box containing both."""
        return LatticeBox(tuple(min(a, b) for a, b in zip(self.lo, other.lo)),
                          tuple(max(a, b) for a, b in zip(self.hi, other.hi)))

    def intersect(self, other):
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        if any(a > b for a, b in zip(lo, hi)):
            return None
        return LatticeBox(lo, hi)

    def padded(self, k):
        return LatticeBox(tuple(a - k for a in self.lo), tuple(b + k for b in self.hi))

    def boundary_layer(self, k):
        """Sites of the box within distance k-1 of the complement (inner ring of thickness k)."""
        ring = []
        for n in self:
            margin = min(min(c - a, b - c) for a, c, b in zip(self.lo, n, self.hi))
            if margin < k:
                ring.append(n)
        return ring

    def nn_pairs(self):
        """Nearest-neighbor site pairs (m, n) with m before n in index order."""
        pairs = []
        for n in self:
            for axis in range(self.d):
                m = tuple(c + (1 if i == axis else 0) for i, c in enumerate(n))
                if m in self:
                    pairs.append((n, m))
        return pairs


def unit_vector(d, axis=0):
    return tuple(1 if i == axis else 0 for i in range(d))


def outer_layer(sites, k, d=None):
    """∂_k of a finite site set: lattice points outside it within l1 distance k."""
    sites = {as_site(n) for n in sites}
    if d is None:
        d = len(next(iter(sites)))
    layer = set()
    frontier = set(sites)
    for _ in range(k):
        new = set()
        for n in frontier:
            for axis in range(d):
                for sgn in (1, -1):
                    m = tuple(c + (sgn if i == axis else 0) for i, c in enumerate(n))
                    if m not in sites and m not in layer:
                        new.add(m)
        layer |= new
        frontier = new
    return layer


def sites_bounding_box(sites):
    sites = [as_site(n) for n in sites]
    d = len(sites[0])
    lo = tuple(min(n[i] for n in sites) for i in range(d))
    hi = tuple(max(n[i] for n in sites) for i in range(d))
    return LatticeBox(lo, hi)


def enumerate_ball(radius, d, norm="linf"):
    """Nonzero integer vectors n with |n| <= radius, as an (N, d) array."""
    rng = np.arange(-radius, radius + 1)
    grids = np.meshgrid(*([rng] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    if norm == "linf":
        mask = np.abs(pts).max(axis=1) <= radius
    else:
        mask = np.abs(pts).sum(axis=1) <= radius
    pts = pts[mask]
    return pts[np.any(pts != 0, axis=1)]


def iter_tuples(lo, hi):
    """All integer tuples in the product of [lo_i, hi_i]."""
    return itertools.product(*[range(a, b + 1) for a, b in zip(lo, hi)])
