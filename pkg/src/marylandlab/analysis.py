"""Localization diagnostics: integrated density of states, spike scaling,
eigenvector decay profiles, inverse participation ratios.

The IDS is the finite-box eigenvalue counting function averaged over a
seeded sample of phases. Spike measurements smooth its derivative with a
kernel whose bandwidth tracks the predicted width (0.5 eps^2 near the
resonant energy), then fit log-log slopes of peak height and FWHM over
an eps sweep.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .boxes import LatticeBox, as_site, set_dist
from .errors import PeakNotFound
from .operators import build_h
from .sampling import pole_distance

AMPLITUDE_FLOOR = 1e-13


@dataclasses.dataclass
class IDSCurve:
    energy_grid: np.ndarray
    counts: np.ndarray
    box_size: int
    eps: float
    n_samples: int = None  # phases averaged over; enables the shot-noise floor

    def __post_init__(self):
        self.energy_grid = np.asarray(self.energy_grid, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if np.any(np.diff(self.counts) < -1e-12):
            raise ValueError("IDS must be non-decreasing")
        if self.counts.min() < -1e-12 or self.counts.max() > 1 + 1e-12:
            raise ValueError("IDS values must lie in [0, 1]")

    def value_at(self, energy):
        return float(np.interp(energy, self.energy_grid, self.counts))

    def covers_spectrum(self):
        return self.counts[0] == 0.0 and self.counts[-1] == 1.0


def sample_phases(rng, n, omega, box, guard=1e-9):
    """Pole-free phases drawn uniformly from (-1/2, 1/2)."""
    sites = box.sites()
    om = np.array(list(omega), dtype=float)
    out = []
    while len(out) < n:
        x = float(rng.uniform(-0.5, 0.5))
        if float(np.min(pole_distance(x + sites @ om))) < guard:
            continue
        out.append(x)
    return out


def compute_ids(f, omega, eps, box_size, x_samples, energy_grid, seed=0, d=1, threads=1):
    """Eigenvalue counting on box_size sites, averaged over x_samples phases.

    Phases are drawn up front from the seeded generator, so the curve is
    byte-identical regardless of the thread count.
    """
    if d != 1:
        raise NotImplementedError("IDS estimator is wired for d = 1 boxes")
    box = LatticeBox.interval(-(box_size // 2), box_size - box_size // 2 - 1)
    rng = np.random.default_rng(seed)
    xs = sample_phases(rng, x_samples, omega, box)
    energy_grid = np.asarray(energy_grid, dtype=float)

    def one(x):
        evs = np.sort(build_h(f, omega, eps, x, box).spectrum())
        return np.searchsorted(evs, energy_grid, side="right")

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, xs))
    else:
        parts = [one(x) for x in xs]
    counts = np.sum(parts, axis=0, dtype=float)
    counts /= (len(xs) * box.size)
    return IDSCurve(energy_grid, counts, box_size, eps, n_samples=x_samples)


def spike_energy_grid(center, eps, lo, hi, fine_points=6001, coarse_points=801,
                      half_width_factor=8.0):
    """Coarse global grid with a fine window resolving an eps^2-wide spike."""
    w = half_width_factor * eps
    fine = np.linspace(center - w, center + w, fine_points)
    coarse = np.linspace(lo, hi, coarse_points)
    return np.union1d(coarse, fine)


def smoothed_dos(curve, bandwidth):
    """Gaussian-smoothed derivative of the IDS on its own grid."""
    grid = curve.energy_grid
    dos = np.gradient(curve.counts, grid)
    out = np.empty_like(dos)
    # direct kernel sum; grids stay small enough at desk scale
    for i, e in enumerate(grid):
        wts = np.exp(-0.5 * ((grid - e) / bandwidth) ** 2)
        out[i] = float(np.sum(wts * dos) / np.sum(wts))
    return out


def _peak_and_fwhm(grid, dos, center, window, noise_floor=0.0):
    sel = np.abs(grid - center) <= window
    if not np.any(sel):
        raise PeakNotFound(f"no grid points within {window} of {center}")
    idx = np.nonzero(sel)[0]
    k = idx[int(np.argmax(dos[idx]))]
    peak = float(dos[k])
    annulus = (np.abs(grid - center) > window) & (np.abs(grid - center) <= 4 * window)
    if not np.any(annulus):
        annulus = ~sel
    background = float(np.median(dos[annulus])) if np.any(annulus) else 0.0
    if peak < 2.0 * max(background, 1e-300):
        raise PeakNotFound(
            f"peak {peak:.3g} below twice the background {background:.3g} near {center}")
    if peak < noise_floor:
        raise PeakNotFound(
            f"peak {peak:.3g} below the single-level noise floor {noise_floor:.3g}")
    half = peak / 2.0
    i = k
    while i > 0 and dos[i] > half:
        i -= 1
    j = k
    while j < len(dos) - 1 and dos[j] > half:
        j += 1
    return peak, float(grid[j] - grid[i]), background


@dataclasses.dataclass
class SpikeFit:
    eps_list: list
    heights: list
    widths: list
    height_exponent: float
    width_exponent: float


def spike_fit(ids_list, center, bandwidth_factor=0.5, window_factor=6.0):
    """Log-log scaling of the DOS spike at the resonant energy.

    Needs at least three curves spanning a decade of eps. The smoothing
    bandwidth is bandwidth_factor * eps^2 (never below twice the local
    grid step); the peak is searched within window_factor * eps.
    """
    if len(ids_list) < 3:
        raise ValueError("need at least 3 eps values")
    eps_vals = np.array([c.eps for c in ids_list], dtype=float)
    if np.log10(eps_vals.max() / eps_vals.min()) < 1.0 - 1e-9:
        raise ValueError("eps sweep must span at least one decade")
    heights, widths = [], []
    for curve in ids_list:
        grid = curve.energy_grid
        sel = np.abs(grid - center) <= window_factor * curve.eps
        step = float(np.min(np.diff(grid[sel]))) if np.sum(sel) > 1 else np.inf
        bw = max(bandwidth_factor * curve.eps**2, 2.0 * step)
        dos = smoothed_dos(curve, bw)
        floor = 0.0
        if curve.n_samples:
            # a genuine spike aggregates many levels per bandwidth
            n_tot = curve.n_samples * curve.box_size
            floor = 5.0 / (n_tot * bw * math.sqrt(2 * math.pi))
        peak, fwhm, _ = _peak_and_fwhm(grid, dos, center, window_factor * curve.eps,
                                       noise_floor=floor)
        heights.append(peak)
        widths.append(fwhm)
    le = np.log10(eps_vals)
    h_exp = float(np.polyfit(le, np.log10(heights), 1)[0])
    w_exp = float(np.polyfit(le, np.log10(widths), 1)[0])
    return SpikeFit(list(eps_vals), heights, widths, h_exp, w_exp)


# ---------------------------------------------------------------------------
# decay profiles and participation

@dataclasses.dataclass
class DecayProfile:
    center: object          # site or site set the shells are anchored at
    samples: list           # (distance, max |psi| on the shell)
    fitted_rate: float      # nats per lattice step; inf for a delta profile
    fitted_prefactor: float
    fit_residual: float


def decay_profile(h, eigvec, center):
    """Shell-wise decay of a normalized eigenvector around a site or set."""
    psi = np.asarray(eigvec, dtype=float)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-9:
        raise ValueError("eigenvector must be normalized")
    anchors = [as_site(center)] if isinstance(center, tuple) or np.isscalar(center) \
        else [as_site(n) for n in center]
    sites = h.box.site_tuples()
    dists = np.array([set_dist(n, anchors) for n in sites])
    samples = []
    for dist in range(int(dists.max()) + 1):
        mask = dists == dist
        if np.any(mask):
            samples.append((dist, float(np.max(np.abs(psi[mask])))))
    usable = [(d, a) for d, a in samples if a > AMPLITUDE_FLOOR]
    if len(usable) < 2:
        return DecayProfile(center, samples, math.inf, samples[0][1] if samples else 0.0, 0.0)
    ds = np.array([d for d, _ in usable], dtype=float)
    la = np.log([a for _, a in usable])
    slope, intercept = np.polyfit(ds, la, 1)
    resid = float(np.sqrt(np.mean((la - (slope * ds + intercept)) ** 2)))
    return DecayProfile(center, samples, float(-slope), float(np.exp(intercept)), resid)


def decay_exponent_rate(profiles, eps_list):
    """Decay rate in units of |log eps|, calibrated over an eps sweep.

    profiles: one DecayProfile per eps, same anchor. Each shell's
    amplitude scales like C_k eps^{p_k}; the returned rate is the slope
    of p_k against k (1.0 means exact eps^dist decay, the constants C_k
    cancel). Shells below the amplitude floor at any eps are dropped.
    """
    eps_list = np.asarray(eps_list, dtype=float)
    by_dist = {}
    for prof, _ in zip(profiles, eps_list):
        for d, amp in prof.samples:
            by_dist.setdefault(d, []).append(amp)
    ks, ps = [], []
    for d in sorted(by_dist):
        amps = by_dist[d]
        if len(amps) == len(eps_list) and min(amps) > AMPLITUDE_FLOOR:
            ks.append(d)
            ps.append(float(np.polyfit(np.log10(eps_list), np.log10(amps), 1)[0]))
    if len(ks) < 3:
        raise ValueError("not enough usable shells to fit a decay exponent")
    return float(np.polyfit(ks, ps, 1)[0])


def ipr(eigvec):
    """Sum |psi|^4 of a normalized vector: 1 at a site, 1/N spread flat."""
    psi = np.asarray(eigvec, dtype=float)
    n2 = float(psi @ psi)
    return float(np.sum(psi**4) / n2**2)
