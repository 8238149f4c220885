"""Finite-volume operators H(x) and edge-interpolated block variants.

H(x) acts on a lattice box: diagonal f(x + omega.n), hopping eps times a
weighted nearest-neighbor Laplacian (weights in [-1, 1], default 1). The
interpolated block realizes the moving-block operator: as x crosses
[x0, x0 + omega_1], edges touching the detached left layer ramp up with
s = (x - x0)/omega_1 while edges touching the right layer ramp down, so
the endpoints are exactly the two direct sums defining the block family.

Storage is dense and symmetric; boxes stay at desk scale.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .boxes import as_site, l1_dist, unit_vector
from .errors import FrameMismatch, PoleProximity
from .sampling import POLE_GUARD, pole_distance


class FiniteOperator:
    """Symmetric operator diag + eps * (weighted adjacency) over a lattice box.

    weights maps index pairs (i, j), i < j, to reals in [-1, 1]; absent
    pairs carry weight zero. Immutable after construction.
    """

    def __init__(self, box, eps, diagonal, weights):
        self.box = box
        self.eps = float(eps)
        self.diagonal = np.asarray(diagonal, dtype=float).copy()
        if self.diagonal.shape != (box.size,):
            raise ValueError("diagonal length does not match box size")
        for (i, j), w in weights.items():
            if not (0 <= i < j < box.size):
                raise ValueError(f"bad edge index pair {(i, j)}")
            if abs(w) > 1.0 + 1e-12:
                raise ValueError(f"edge weight {w} outside [-1, 1]")
        self.weights = dict(weights)
        self.diagonal.setflags(write=False)
        self._matrix = None

    @property
    def n(self):
        return self.box.size

    def matrix(self):
        if self._matrix is None:
            m = np.diag(self.diagonal)
            for (i, j), w in self.weights.items():
                m[i, j] = m[j, i] = self.eps * w
            m.setflags(write=False)
            self._matrix = m
        return self._matrix

    def hopping_matrix(self):
        """The unscaled weight matrix Phi with H = V + eps * Phi."""
        m = np.zeros((self.n, self.n))
        for (i, j), w in self.weights.items():
            m[i, j] = m[j, i] = w
        return m

    def eigh(self):
        return np.linalg.eigh(self.matrix())

    def spectrum(self):
        return np.linalg.eigvalsh(self.matrix())

    def entry(self, m, n):
        i, j = self.box.index(m), self.box.index(n)
        if i == j:
            return float(self.diagonal[i])
        key = (min(i, j), max(i, j))
        return self.eps * self.weights.get(key, 0.0)

    def weight(self, m, n):
        i, j = self.box.index(m), self.box.index(n)
        return self.weights.get((min(i, j), max(i, j)), 0.0)

    def shifted_copy(self, a):
        """The same matrix data re-addressed on box + a (translation covariance helper)."""
        return FiniteOperator(self.box.shifted(a), self.eps, self.diagonal, self.weights)

    def submatrix(self, sites):
        """Dense restriction to an arbitrary site collection (Dirichlet outside)."""
        idx = [self.box.index(n) for n in sites]
        return self.matrix()[np.ix_(idx, idx)]

    def restricted(self, sub):
        """Restriction to a sub-box (Dirichlet: edges leaving the sub-box dropped)."""
        idx = [self.box.index(n) for n in sub]
        pos = {k: p for p, k in enumerate(idx)}
        diag = self.diagonal[idx]
        weights = {}
        for (i, j), w in self.weights.items():
            if i in pos and j in pos:
                a, b = pos[i], pos[j]
                weights[(min(a, b), max(a, b))] = w
        return FiniteOperator(sub, self.eps, diag, weights)


def laplacian_weights(box, weight=1.0):
    return {(box.index(m), box.index(n)): weight for m, n in box.nn_pairs()}


def _diagonal_values(f, omega, x, box):
    sites = box.sites()
    phases = x + sites @ np.array(list(omega), dtype=float)
    dist = pole_distance(phases)
    if np.any(dist < POLE_GUARD):
        k = int(np.argmin(dist))
        raise PoleProximity(float(phases[k]), site=tuple(int(c) for c in sites[k]))
    return f.eval(phases)


def build_h(f, omega, eps, x, box):
    """H(x) = eps * Delta + f(x + omega.n) on the box."""
    diag = _diagonal_values(f, omega, x, box)
    return FiniteOperator(box, eps, diag, laplacian_weights(box))


# ---------------------------------------------------------------------------
# interpolated moving-block operator

def interpolation_weights(x, x0, omega1):
    """(w_minus, w_plus) edge factors at phase x for a block anchored at x0.

    On [x0, x0 + omega1]: w_minus = s, w_plus = 1 - s with s = (x-x0)/omega1.
    Beyond that interval the off-diagonal interpolation runs linearly back,
    making the family 1-periodic; only tests exercise the return leg.
    """
    u = (x - x0) % 1.0
    if u <= omega1:
        s = u / omega1
    else:
        s = 1.0 - (u - omega1) / (1.0 - omega1)
    return s, 1.0 - s


def interpolated_block(f, omega, eps, x, x0, frame, diagonal_mode="true-x"):
    """The interpolated operator on R' = R_- | R_0 | R_+ at phase x.

    Edges with an endpoint in R_- carry weight s, edges with an endpoint
    in R_+ carry weight 1-s, interior R_0 edges carry weight 1; at s=0 and
    s=1 this reproduces the two endpoint direct sums. The diagonal is
    evaluated at the true x by default; "interpolated" blends the two
    endpoint diagonals instead (both agree at the endpoints).
    """
    box = frame.r_prime_box
    minus, zero, plus = frame.r_minus, frame.r_zero, frame.r_plus
    if (minus | zero | plus) != frozenset(box.site_tuples()) or \
            len(minus) + len(zero) + len(plus) != box.size:
        raise FrameMismatch("R-, R0, R+ do not partition R'")
    s, one_minus_s = interpolation_weights(x, x0, frame.omega1)

    weights = {}
    for m, n in box.nn_pairs():
        if m in plus or n in plus:
            if m in minus or n in minus:
                raise FrameMismatch(f"edge {m}-{n} joins R_- to R_+")
            w = one_minus_s
        elif m in minus or n in minus:
            w = s
        else:
            w = 1.0
        weights[(box.index(m), box.index(n))] = w

    if diagonal_mode == "true-x":
        diag = _diagonal_values(f, omega, x, box)
    elif diagonal_mode == "interpolated":
        d0 = _diagonal_values(f, omega, x0, box)
        d1 = _diagonal_values(f, omega, x0 + frame.omega1, box)
        diag = (1.0 - s) * d0 + s * d1
    else:
        raise ValueError(f"unknown diagonal_mode {diagonal_mode!r}")
    return FiniteOperator(box, eps, diag, weights)


def interpolated_block_derivative(f, omega, eps, x, x0, frame):
    """d/dx of the interpolated block at true-x diagonal (for Hellmann-Feynman).

    Diagonal rate f'(x + omega.n); ramp edges contribute +-eps/omega1.
    """
    box = frame.r_prime_box
    sites = box.sites()
    phases = x + sites @ np.array(list(omega), dtype=float)
    m = np.diag(f.eval_derivative(phases))
    u = (x - x0) % 1.0
    ds = 1.0 / frame.omega1 if u <= frame.omega1 else -1.0 / (1.0 - frame.omega1)
    for a, b in box.nn_pairs():
        if b in frame.r_plus or a in frame.r_plus:
            rate = -ds
        elif a in frame.r_minus or b in frame.r_minus:
            rate = ds
        else:
            continue
        i, j = box.index(a), box.index(b)
        m[i, j] = m[j, i] = eps * rate
    return m


# ---------------------------------------------------------------------------
# quasiperiodic hopping families and coupling graphs

class HoppingFamily:
    """Finite collection of finite-range quasiperiodic hopping matrices.

    levels[k] describes Phi^{k+1} as a dict offset -> phi callable, with
    Phi^j_{mn}(x) = phi_{m-n}(x + omega.(m+n)/2). Self-adjointness needs
    phi_m = phi_{-m} (real case); covariance is automatic from the form.
    """

    def __init__(self, omega, levels, range_step=1):
        self.omega = omega
        self.range_step = int(range_step)
        norm_levels = []
        for j, level in enumerate(levels, start=1):
            lvl = {}
            for off, phi in level.items():
                off = as_site(off)
                lvl[off] = phi
            for off in lvl:
                neg = tuple(-c for c in off)
                if neg not in lvl:
                    raise ValueError(f"level {j}: phi_{off} present but phi_{neg} missing")
                if sum(abs(c) for c in off) > j * self.range_step:
                    raise ValueError(f"level {j}: offset {off} exceeds range {j * self.range_step}")
            norm_levels.append(lvl)
        self.levels = norm_levels

    def entry(self, m, n, x, level):
        m, n = as_site(m), as_site(n)
        off = tuple(a - b for a, b in zip(m, n))
        phi = self.levels[level - 1].get(off)
        if phi is None:
            return 0.0
        mid = x + self.omega.dot(tuple(a + b for a, b in zip(m, n))) / 2.0
        return float(phi(mid))

    def norm_eps(self, eps, grid_points=512):
        """max(sup |phi|, eps * sup |phi'|), phi' by central differences on a grid."""
        xs = np.linspace(-0.5, 0.5, grid_points, endpoint=False)
        h = 1e-6
        sup_val = 0.0
        sup_der = 0.0
        for level in self.levels:
            for phi in level.values():
                vals = np.array([phi(x) for x in xs])
                ders = np.array([(phi(x + h) - phi(x - h)) / (2 * h) for x in xs])
                sup_val = max(sup_val, float(np.abs(vals).max()))
                sup_der = max(sup_der, float(np.abs(ders).max()))
        return max(sup_val, eps * sup_der)


@dataclasses.dataclass
class CouplingGraph:
    """Edges between lattice points with ladder lengths (smallest contributing level)."""

    vertices: list
    edges: dict  # (m, n) sorted pair -> int length

    def lengths_at(self, site):
        site = as_site(site)
        return sorted(length for (m, n), length in self.edges.items() if site in (m, n))

    def min_length_at(self, site):
        lengths = self.lengths_at(site)
        return min(lengths) if lengths else None


def coupling_graph(h_family, x0, box, tol=1e-14):
    """Graph of nonzero hoppings at x0, with edge length = smallest level j."""
    verts = box.site_tuples()
    edges = {}
    max_level = len(h_family.levels)
    max_range = max_level * h_family.range_step
    for i, m in enumerate(verts):
        for n in verts[i + 1:]:
            if l1_dist(m, n) > max_range:
                continue
            for j in range(1, max_level + 1):
                if abs(h_family.entry(m, n, x0, j)) > tol:
                    edges[(m, n)] = j
                    break
    return CouplingGraph(verts, edges)


def graph_from_exponents(exponents, floor_exponent=None):
    """Coupling graph from fitted eps-exponents of residual entries.

    Edge length = floor of the fitted exponent (entries decaying like
    eps^p act as level-p hoppings); entries with exponent None (below the
    numeric floor at all sweep points) are omitted.
    """
    edges = {}
    verts = set()
    for (m, n), p in exponents.items():
        verts.add(m)
        verts.add(n)
        if p is None:
            continue
        if floor_exponent is not None and p < floor_exponent:
            p = floor_exponent
        edges[(m, n)] = max(1, int(np.floor(p + 0.25)))
    return CouplingGraph(sorted(verts), edges)


def laplacian_family(omega, d=1):
    """The nearest-neighbor Laplacian as a single-level hopping family."""
    level = {}
    for axis in range(d):
        e = unit_vector(d, axis)
        level[e] = lambda x: 1.0
        level[tuple(-c for c in e)] = lambda x: 1.0
    return HoppingFamily(omega, [level], range_step=1)


# ---------------------------------------------------------------------------
# coarse spectral bounds

def largest_entry_bound(f, omega, x, box):
    """Second-largest |f(x + omega.n)| over the box.

    All eigenvalues except at most one are bounded by this plus
    eps * sup |phi| (the one exception is a near-pole site).
    """
    diag = np.abs(_diagonal_values(f, omega, x, box))
    if diag.size < 2:
        return float(diag[0])
    return float(np.sort(diag)[-2])
