"""Maryland-type sampling functions with flat pieces.

A sampling function f is non-decreasing on (-1/2, 1/2) with
f(-1/2+0) = -inf, f(1/2-0) = +inf, extended 1-periodically. It is built
from pieces that tile (-1/2, 1/2): flat segments and closed-form
monotone maps (scaled tangent, linear, scaled odd power). The homotopy
parameter t tilts the function by t * frac(x - 1/2), which destroys flat
pieces while preserving monotonicity.

Conventions:
  - phases are reduced mod 1 into (-1/2, 1/2); evaluation within 1e-12
    of 1/2 + Z raises PoleProximity (pole sites are excluded from x-grids
    instead of implementing the Dirichlet-deleted operator),
  - the derivative at a kink is the smallest derivative number,
    realized as the min of one-sided difference quotients at step 1e-8.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .boxes import as_site, enumerate_ball
from .errors import NearRational, PoleProximity

POLE_GUARD = 1e-12
KINK_TOL = 1e-9
KINK_STEP = 1e-8


# ---------------------------------------------------------------------------
# pieces

class FlatPiece:
    """Constant segment: the source of singular (resonant) sites."""

    is_flat = True
    diverges_left = False
    diverges_right = False

    def __init__(self, lo, hi, value):
        if not lo < hi:
            raise ValueError("flat piece needs lo < hi")
        self.lo = float(lo)
        self.hi = float(hi)
        self.value = float(value)

    @property
    def length(self):
        return self.hi - self.lo

    def values(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value)

    def derivatives(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def describe(self):
        return {"kind": "flat", "lo": self.lo, "hi": self.hi, "value": self.value}


class TangentPiece:
    """offset + scale * tan(pi * (x - center)); poles at center + 1/2 + Z."""

    is_flat = False

    def __init__(self, lo, hi, scale, center=0.0, offset=0.0):
        if scale <= 0:
            raise ValueError("tangent piece must be increasing (scale > 0)")
        self.lo = float(lo)
        self.hi = float(hi)
        self.scale = float(scale)
        self.center = float(center)
        self.offset = float(offset)
        # no pole strictly inside the piece
        k_lo = math.floor((self.lo - self.center - 0.5)) + 1
        k_hi = math.ceil((self.hi - self.center - 0.5)) - 1
        for k in range(k_lo, k_hi + 1):
            pole = self.center + 0.5 + k
            if self.lo + POLE_GUARD < pole < self.hi - POLE_GUARD:
                raise ValueError(f"tangent pole at {pole} inside piece ({self.lo}, {self.hi})")

    @property
    def diverges_left(self):
        return abs((self.lo - self.center) - round(self.lo - self.center - 0.5) - 0.5) < 1e-9

    @property
    def diverges_right(self):
        return abs((self.hi - self.center) - round(self.hi - self.center - 0.5) - 0.5) < 1e-9

    def values(self, x):
        return self.offset + self.scale * np.tan(np.pi * (np.asarray(x, dtype=float) - self.center))

    def derivatives(self, x):
        c = np.cos(np.pi * (np.asarray(x, dtype=float) - self.center))
        return self.scale * np.pi / c**2

    def describe(self):
        return {"kind": "tangent", "lo": self.lo, "hi": self.hi, "scale": self.scale,
                "center": self.center, "offset": self.offset}


class LinearPiece:
    is_flat = False
    diverges_left = False
    diverges_right = False

    def __init__(self, lo, hi, slope, intercept=0.0):
        if slope < 0:
            raise ValueError("linear piece must be non-decreasing")
        self.lo = float(lo)
        self.hi = float(hi)
        self.slope = float(slope)
        self.intercept = float(intercept)

    def values(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept

    def derivatives(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.slope)

    def describe(self):
        return {"kind": "linear", "lo": self.lo, "hi": self.hi, "slope": self.slope,
                "intercept": self.intercept}


class OddPowerPiece:
    """offset + scale * sign(x - center) |x - center|^power, power >= 1."""

    is_flat = False
    diverges_left = False
    diverges_right = False

    def __init__(self, lo, hi, scale, power, center=0.0, offset=0.0):
        if scale <= 0 or power < 1:
            raise ValueError("odd-power piece needs scale > 0 and power >= 1")
        self.lo = float(lo)
        self.hi = float(hi)
        self.scale = float(scale)
        self.power = float(power)
        self.center = float(center)
        self.offset = float(offset)

    def values(self, x):
        u = np.asarray(x, dtype=float) - self.center
        return self.offset + self.scale * np.sign(u) * np.abs(u) ** self.power

    def derivatives(self, x):
        u = np.asarray(x, dtype=float) - self.center
        return self.scale * self.power * np.abs(u) ** (self.power - 1.0)

    def describe(self):
        return {"kind": "oddpow", "lo": self.lo, "hi": self.hi, "scale": self.scale,
                "power": self.power, "center": self.center, "offset": self.offset}


# ---------------------------------------------------------------------------
# the sampling function

def reduce_phase(x):
    """Reduce mod 1 into [-1/2, 1/2); raises PoleProximity near 1/2 + Z."""
    x = np.asarray(x, dtype=float)
    xr = x - np.round(x)
    bad = np.abs(np.abs(xr) - 0.5) < POLE_GUARD
    if np.any(bad):
        offending = float(np.atleast_1d(x)[np.atleast_1d(bad)].flat[0])
        raise PoleProximity(offending)
    return xr


def pole_distance(x):
    """Distance of x mod 1 to 1/2 + Z (no raising)."""
    xr = np.asarray(x, dtype=float)
    xr = xr - np.round(xr)
    return np.abs(np.abs(xr) - 0.5)


class SamplingFunction:
    """Piecewise sampling function over (-1/2, 1/2), 1-periodic, homotopy-tilted.

    Pieces must tile (-1/2, 1/2) contiguously, meet continuously (jump
    discontinuities are rejected) and be jointly non-decreasing.
    """

    def __init__(self, pieces, e_reg=None, t=0.0):
        if not pieces:
            raise ValueError("need at least one piece")
        pieces = sorted(pieces, key=lambda p: p.lo)
        if abs(pieces[0].lo + 0.5) > 1e-12 or abs(pieces[-1].hi - 0.5) > 1e-12:
            raise ValueError("pieces must tile (-1/2, 1/2)")
        for left, right in zip(pieces, pieces[1:]):
            if abs(left.hi - right.lo) > 1e-12:
                raise ValueError(f"gap or overlap at {left.hi} / {right.lo}")
            lv = float(left.values(left.hi)) if not left.diverges_right else None
            rv = float(right.values(right.lo)) if not right.diverges_left else None
            if lv is not None and rv is not None and abs(lv - rv) > 1e-9:
                raise ValueError(f"jump discontinuity at x={right.lo}: {lv} vs {rv}")
        self.pieces = tuple(pieces)
        self.e_reg = e_reg
        self.t = float(t)
        if self.t < 0:
            raise ValueError("homotopy parameter t must be >= 0")
        self._los = np.array([p.lo for p in pieces])
        self._junctions = tuple(p.lo for p in pieces[1:])
        self._check_monotone()

    def _check_monotone(self):
        xs = np.linspace(-0.5 + 1e-9, 0.5 - 1e-9, 2048)
        vals = self._eval_reduced(xs)
        if np.any(np.diff(vals) < -1e-9):
            raise ValueError("pieces are not jointly non-decreasing")

    def with_t(self, t):
        # tilting only adds slope; skip revalidation (pieces are shared, immutable)
        if t < 0:
            raise ValueError("homotopy parameter t must be >= 0")
        clone = object.__new__(SamplingFunction)
        clone.__dict__.update(self.__dict__)
        clone.t = float(t)
        return clone

    @property
    def flat_pieces(self):
        return [p for p in self.pieces if p.is_flat]

    @property
    def junctions(self):
        return self._junctions

    def diverges(self):
        return self.pieces[0].diverges_left and self.pieces[-1].diverges_right

    def _piece_index(self, xr):
        idx = np.searchsorted(self._los, xr, side="right") - 1
        return np.clip(idx, 0, len(self.pieces) - 1)

    def _eval_reduced(self, xr, with_tilt=True):
        xr = np.asarray(xr, dtype=float)
        out = np.empty_like(xr)
        idx = self._piece_index(xr)
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = piece.values(xr[mask])
        if with_tilt and self.t != 0.0:
            out = out + self.t * (xr + 0.5)
        return out

    def eval(self, x):
        """f_t(x) with x reduced mod 1; scalar in, scalar out."""
        scalar = np.isscalar(x) or np.asarray(x).ndim == 0
        xr = reduce_phase(x)
        out = self._eval_reduced(np.atleast_1d(xr))
        return float(out[0]) if scalar else out.reshape(np.shape(x))

    def _derivative_reduced(self, xr):
        xr = np.asarray(xr, dtype=float)
        out = np.empty_like(xr)
        idx = self._piece_index(xr)
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = piece.derivatives(xr[mask])
        if self.t != 0.0:
            out = out + self.t
        return out

    def eval_derivative(self, x):
        """f_t'(x); at a kink, the smallest of the one-sided difference quotients."""
        scalar = np.isscalar(x) or np.asarray(x).ndim == 0
        xr = np.atleast_1d(reduce_phase(x))
        out = self._derivative_reduced(xr)
        if self._junctions:
            near = np.min(np.abs(xr[:, None] - np.array(self._junctions)[None, :]), axis=1)
            for k in np.nonzero(near < KINK_TOL)[0]:
                j = float(xr[k])
                fj = self._eval_reduced(np.array([j]))[0]
                right = (self._eval_reduced(np.array([j + KINK_STEP]))[0] - fj) / KINK_STEP
                left = (fj - self._eval_reduced(np.array([j - KINK_STEP]))[0]) / KINK_STEP
                out[k] = min(left, right)
        return float(out[0]) if scalar else out.reshape(np.shape(x))


# ---------------------------------------------------------------------------
# regularity certificates

@dataclasses.dataclass(frozen=True)
class RegularityCertificate:
    x0: float
    c_reg: float
    d_min: float
    window: tuple
    status: str  # "regular" | "singular"
    reason: str = ""
    max_ratio: float = 0.0  # smallest C_reg the window would accept

    @property
    def regular(self):
        return self.status == "regular"


def _upper_preimages(f, targets, lo=-0.5 + 1e-11, hi=0.5 - 1e-11, iters=70):
    """For each v in targets, the smallest x in (-1/2, 1/2) with f_t(x) > v.

    One vectorized bisection for all targets (f non-decreasing).
    """
    v = np.asarray(targets, dtype=float)
    a = np.full_like(v, lo)
    b = np.full_like(v, hi)
    above_lo = f._eval_reduced(a) > v
    b[above_lo] = lo
    below_hi = f._eval_reduced(np.full_like(v, hi)) <= v
    a[below_hi] = hi
    b[below_hi] = hi
    for _ in range(iters):
        mid = 0.5 * (a + b)
        up = f._eval_reduced(mid) > v
        b[up] = mid[up]
        a[~up] = mid[~up]
    return b


def _upper_preimage(f, v, **kw):
    return float(_upper_preimages(f, [v], **kw)[0])


def certify_regularity(f, x0, c_reg, grid_points=10_000):
    """Grid verification of C_reg-regularity at x0: window bijectivity,
    derivative ratio bound, and the reciprocal-Lipschitz bound.

    Returns a singular certificate (never raises) for any failed check;
    PoleProximity from evaluating x0 itself propagates.
    """
    tol = 1e-10
    x0r = float(reduce_phase(x0))
    v0 = f.eval(x0r)

    ends = _upper_preimages(f, [v0 - 2.0, v0 + 2.0, v0 - 1.0, v0 + 1.0])
    a, b, a1, b1 = (float(e) for e in ends)
    window = (a, b)

    # a flat piece overlapping the open window kills injectivity outright
    for p in f.flat_pieces:
        if f.t == 0.0 and p.lo < b - 1e-12 and p.hi > a + 1e-12:
            return RegularityCertificate(x0r, c_reg, 0.0, window, "singular",
                                         f"flat piece [{p.lo}, {p.hi}] in window")

    if b - a < 1e-10:
        # the window preimage is at (or below) float resolution: the slope
        # is >= 4/(b-a) >= 1e10, a pole-dominated point, regular by the
        # same convention that treats the infinite-potential site as regular
        d_est = float(f.eval_derivative(x0r))
        return RegularityCertificate(x0r, c_reg, d_est, window, "regular",
                                     "pole-dominated window", 1.0)

    pad = (b - a) * 1e-6
    xs = np.linspace(a + pad, b - pad, grid_points)
    xs = np.union1d(xs, [j for j in f.junctions if a + pad < j < b - pad])
    derivs = f.eval_derivative(xs)
    d_min = float(derivs.min())
    d_max = float(derivs.max())
    if d_min < 1.0 - tol:
        return RegularityCertificate(x0r, c_reg, d_min, window, "singular",
                                     f"D_min = {d_min:.3g} < 1")
    max_ratio = d_max / d_min
    if d_max > c_reg * d_min + tol:
        return RegularityCertificate(x0r, c_reg, d_min, window, "singular",
                                     f"derivative ratio {max_ratio:.3g} > C_reg", max_ratio)

    # window must map onto (v0-2, v0+2): endpoints of the sampled window
    vals = f.eval(np.array([xs[0], xs[-1]]))
    if vals[0] > v0 - 2.0 + 0.1 or vals[1] < v0 + 2.0 - 0.1:
        return RegularityCertificate(x0r, c_reg, d_min, window, "singular",
                                     "window does not cover (f(x0)-2, f(x0)+2)", max_ratio)

    # reciprocal-Lipschitz bound on the complement of the +-1 sub-window
    pad1 = max(pad, 1e-12)
    ys = np.linspace(b1 + pad1, a1 + 1.0 - pad1, grid_points)
    ys = ys[pole_distance(ys) > 10 * POLE_GUARD]
    fy = f.eval(ys)
    dfy = f.eval_derivative(ys)
    gprime = np.abs(dfy / (fy - v0) ** 2)
    g_max = float(gprime.max())
    if g_max > c_reg * d_min + tol:
        return RegularityCertificate(x0r, c_reg, d_min, window, "singular",
                                     f"|g'| = {g_max:.3g} exceeds C_reg * D_min",
                                     max(max_ratio, g_max / d_min))

    return RegularityCertificate(x0r, c_reg, d_min, window, "regular", "",
                                 max(max_ratio, g_max / d_min))


def is_locally_lipschitz_monotone(f, y0, grid_points=2_000):
    """f' >= 1 on the preimage of (f(y0)-1, f(y0)+1); weaker than C_reg-regularity."""
    try:
        v0 = f.eval(y0)
    except PoleProximity:
        return False, 0.0
    a = _upper_preimage(f, v0 - 1.0)
    b = _upper_preimage(f, v0 + 1.0)
    if not a < b:
        return False, 0.0
    pad = max(1e-12, (b - a) * 1e-9)
    xs = np.linspace(a + pad, b - pad, grid_points)
    xs = np.union1d(xs, [j for j in f.junctions if a + pad < j < b - pad])
    d_min = float(f.eval_derivative(xs).min())
    # 1e-6 slack: kink quotients at step 1e-8 carry O(1e-8) rounding noise
    return d_min >= 1.0 - 1e-6, d_min


# ---------------------------------------------------------------------------
# frequency vectors

@dataclasses.dataclass(frozen=True)
class FrequencyVector:
    omega: tuple
    c_dio: float
    tau_dio: float
    scan_radius: int

    @property
    def d(self):
        return len(self.omega)

    @property
    def omega1(self):
        return self.omega[0]

    def dot(self, n):
        n = as_site(n)
        return sum(w * c for w, c in zip(self.omega, n))

    def __iter__(self):
        return iter(self.omega)


def verify_diophantine(omega, scan_radius):
    """Finite-radius Diophantine certificate: brute-force min of ||n.omega|| |n|^tau.

    The certificate is scoped to the scan radius (a check, not a proof);
    growing the radius can only shrink c_dio. |n| is the sup norm.
    """
    omega = tuple(float(w) for w in np.atleast_1d(omega))
    d = len(omega)
    if not all(0 < a < 0.5 for a in omega) or list(omega) != sorted(omega) or len(set(omega)) != d:
        raise ValueError("need 0 < omega_1 < ... < omega_d < 1/2")
    scan_radius = int(scan_radius)

    best = {tau: np.inf for tau in (d + 1.5, d + 2.0)}
    if d == 1:
        ns = np.arange(1, scan_radius + 1, dtype=float)[:, None]
    else:
        ns = enumerate_ball(scan_radius, d).astype(float)
    dots = ns @ np.array(omega)
    dist = np.abs(dots - np.round(dots))
    worst = int(np.argmin(dist))
    if dist[worst] < 1e-12:
        raise NearRational(tuple(int(c) for c in ns[worst]), float(dist[worst]))
    sup = np.abs(ns).max(axis=1)
    for tau in best:
        best[tau] = float(np.min(dist * sup**tau))
    tau_dio = max(best, key=lambda tau: best[tau])
    return FrequencyVector(omega, best[tau_dio], tau_dio, scan_radius)


# ---------------------------------------------------------------------------
# singular sets

def singular_set(f, omega, x, box, c_reg, grid_points=4_000):
    """Sites of the box whose phase fails the regularity certificate.

    The at-most-one site whose phase sits at the pole (infinite potential)
    is treated as regular.
    """
    out = set()
    for n in box:
        y = x + omega.dot(n)
        if float(pole_distance(y)) < POLE_GUARD:
            continue  # the infinite-potential point counts as regular
        if not certify_regularity(f, y, c_reg, grid_points=grid_points).regular:
            out.add(n)
    return frozenset(out)


# ---------------------------------------------------------------------------
# ready-made models

def maryland_tangent(scale=1.0):
    """The classical model: f(x) = scale * tan(pi x)."""
    return SamplingFunction([TangentPiece(-0.5, 0.5, scale=scale)])


def flat_piece_model(a, L, E, wall_scale, e_reg=None, steep_climb=None, steep_width=None):
    """Single flat segment [a, a+L] at height E with tangent walls to -+inf.

    With steep_climb/steep_width set, a linear segment of that width hugs
    each end of the piece and climbs that many energy units before the
    tangent wall takes over: the value window (E-2, E+2) then clears the
    piece within the narrow margin while the far diagonal gaps stay O(1).
    """
    sl = sr = float(wall_scale)
    flat = FlatPiece(a, a + L, E)
    if steep_climb is None:
        left = TangentPiece(-0.5, a, scale=sl, offset=E - sl * math.tan(math.pi * a))
        right = TangentPiece(a + L, 0.5, scale=sr,
                             offset=E - sr * math.tan(math.pi * (a + L)))
        return SamplingFunction([left, flat, right], e_reg=e_reg)
    w = float(steep_width)
    slope = float(steep_climb) / w
    lin_l = LinearPiece(a - w, a, slope, E - slope * a)
    lin_r = LinearPiece(a + L, a + L + w, slope, E - slope * (a + L))
    left = TangentPiece(-0.5, a - w, scale=sl,
                        offset=(E - steep_climb) - sl * math.tan(math.pi * (a - w)))
    right = TangentPiece(a + L + w, 0.5, scale=sr,
                         offset=(E + steep_climb) - sr * math.tan(math.pi * (a + L + w)))
    return SamplingFunction([left, lin_l, flat, lin_r, right], e_reg=e_reg)


def banded_flat_model(a, L, E, mild_slope, steep_climb, steep_width,
                      tail_start=0.47, tail_scale=0.5, e_reg=None):
    """Flat segment with piecewise-linear walls and tangent tails.

    Next to the piece a steep linear segment climbs steep_climb within
    steep_width (clearing the (E-2, E+2) window inside the margin); the
    rest of the wall is linear at mild_slope, so consecutive diagonal
    values are spaced ~ mild_slope * omega uniformly; tangent tails past
    +-tail_start supply the +-infinity limits.
    """
    w = float(steep_width)
    slope = float(steep_climb) / w
    v_left = (E - steep_climb) + mild_slope * (-tail_start - (a - w))
    v_right = (E + steep_climb) + mild_slope * (tail_start - (a + L + w))
    pieces = [
        TangentPiece(-0.5, -tail_start, scale=tail_scale,
                     offset=v_left - tail_scale * math.tan(-math.pi * tail_start)),
        LinearPiece(-tail_start, a - w, mild_slope,
                    (E - steep_climb) - mild_slope * (a - w)),
        LinearPiece(a - w, a, slope, E - slope * a),
        FlatPiece(a, a + L, E),
        LinearPiece(a + L, a + L + w, slope, E - slope * (a + L)),
        LinearPiece(a + L + w, tail_start, mild_slope,
                    (E + steep_climb) - mild_slope * (a + L + w)),
        TangentPiece(tail_start, 0.5, scale=tail_scale,
                     offset=v_right - tail_scale * math.tan(math.pi * tail_start)),
    ]
    return SamplingFunction(pieces, e_reg=e_reg)


def staircase_model(intervals, energies, edge_scale, e_reg=None):
    """Several flat segments at increasing energies, tangent walls between and outside.

    intervals: list of (lo, hi) for the flat pieces, disjoint and increasing.
    Interior walls are tangent arcs centered at the gap midpoint with the
    scale fixed by continuity at both ends.
    """
    if len(intervals) != len(energies):
        raise ValueError("one energy per interval")
    order = sorted(range(len(intervals)), key=lambda i: intervals[i][0])
    intervals = [intervals[i] for i in order]
    energies = [energies[i] for i in order]
    if any(e2 <= e1 for e1, e2 in zip(energies, energies[1:])):
        raise ValueError("energies must increase with position")

    pieces = []
    a0 = intervals[0][0]
    pieces.append(TangentPiece(-0.5, a0, scale=edge_scale,
                               offset=energies[0] - edge_scale * math.tan(math.pi * a0)))
    for i, ((lo, hi), E) in enumerate(zip(intervals, energies)):
        pieces.append(FlatPiece(lo, hi, E))
        if i + 1 < len(intervals):
            nlo = intervals[i + 1][0]
            dE = energies[i + 1] - E
            c = 0.5 * (hi + nlo)
            span = math.tan(math.pi * (nlo - c)) - math.tan(math.pi * (hi - c))
            s = dE / span
            v = E - s * math.tan(math.pi * (hi - c))
            pieces.append(TangentPiece(hi, nlo, scale=s, center=c, offset=v))
    b_end = intervals[-1][1]
    pieces.append(TangentPiece(b_end, 0.5, scale=edge_scale,
                               offset=energies[-1] - edge_scale * math.tan(math.pi * b_end)))
    return SamplingFunction(pieces, e_reg=e_reg)
