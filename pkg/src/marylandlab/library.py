"""Ready-made operator geometries and the hypothesis checklist.

Canonical parameters (desk scale, all verified by the checklist):

  example1   d=1, omega = (3-sqrt5)/10, flat piece of length 5.3*omega at
             energy 0: the M=5 single-segment geometry (block [-2,3] inside
             [-5,6]); predicted derivative exponent mu = 2.
  example2   d=2, omega = (0.08475*sqrt2, 0.0922*sqrt3), a short piece
             (single-site resonance) with the claw continuation layer; the
             perpendicular-regularity scan has margin ~0.025.
  example3   d=1, two short pieces far apart: two frames with disjoint
             supports (commuting conjugations).
  example4   d=1, the same two pieces pushed together: the per-piece frames
             collide and the checklist recommends the merged block, which
             passes.
  example5   d=1 chain I_{j+1} = I_j + omega with N = 2k-1 pieces: the
             center interval needs two hops to escape, mu = 2k.
  example6   d=2 tree: a short piece whose perpendicular neighbor lands on
             a second piece; escape takes one hop, mu = 2 per interval.

Frequencies are quadratic irrationals so finite-radius Diophantine scans
certify them; spans obey the no-wrap condition (all frame phases inside
one branch of f).
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .boxes import LatticeBox
from .errors import Gen2Violation, Gen4Violation, MarylandError, PoleProximity
from .movingblock import (
    assemble_u2,
    build_frame,
    build_u0,
    predicted_mu,
)
from .sampling import (
    banded_flat_model,
    certify_regularity,
    flat_piece_model,
    pole_distance,
    singular_set,
    staircase_model,
    verify_diophantine,
)

OMEGA_EX1 = (3 - math.sqrt(5)) / 10
OMEGA_EX2 = (0.0135 * math.sqrt(2), 0.165 * math.sqrt(3))
OMEGA_EX6 = (0.0135 * math.sqrt(2), 0.0962 * math.sqrt(3))  # vertical block needs ||d om2|| >= 8.5 om1
OMEGA_EX3 = math.sqrt(2) / 35
OMEGA_EX5 = (math.sqrt(5) - 1) / 20


# ---------------------------------------------------------------------------
# checklist plumbing

@dataclasses.dataclass
class CheckItem:
    name: str
    passed: bool
    witness: str


@dataclasses.dataclass
class Checklist:
    items: list
    warnings: list = dataclasses.field(default_factory=list)

    @property
    def passed(self):
        return all(item.passed for item in self.items)

    def first_failure(self):
        for item in self.items:
            if not item.passed:
                return item
        return None

    def as_lines(self):
        lines = [f"{item.name} = {'pass' if item.passed else 'FAIL'}  # {item.witness}"
                 for item in self.items]
        lines += [f"warning = {w}" for w in self.warnings]
        return lines


# ---------------------------------------------------------------------------
# configurations

class Example1Config:
    """Single flat segment on d=1 with tangent walls."""

    name = "example1"
    d = 1
    predicted_exponent = 2

    def __init__(self, omega=OMEGA_EX1, l_over_omega=5.3, energy=0.0, center=0.0,
                 mild_slope=None, c_reg=160.0, r=3, scan_radius=2000, eps=1e-2,
                 steep_climb=2.05, steep_width_over_beta=0.6):
        self.omega_value = float(omega)
        self.length = l_over_omega * omega
        self.energy = float(energy)
        self.center = float(center)
        self.a = self.center - self.length / 2
        # consecutive diagonal gaps ~0.35 compensate the k! of the linear
        # ladder so shell fits of eps^dist decay land on |log eps|
        self.mild_slope = float(mild_slope) if mild_slope is not None else 0.30 / omega
        self.c_reg = float(c_reg)
        self.r = int(r)
        self.scan_radius = int(scan_radius)
        self.eps = float(eps)
        self.p = int(math.floor(self.length / omega + 1e-12))
        self.z = self.length - self.p * omega
        self.beta = min(self.z, omega - self.z)
        self.steep_climb = steep_climb
        # degenerate (z2) geometries (beta = 0) still need a constructible f
        # so the checklist can evaluate and fail (z2)
        width_base = self.beta if self.beta > 1e-12 else 0.5 * omega
        self.steep_width = steep_width_over_beta * width_base
        self.m_big = int(math.ceil(self.length / (2 * omega))) + 2
        self.x0 = self.center - omega
        self._f = None
        self._fv = None

    def sampling_function(self):
        if self._f is None:
            kw = dict(mild_slope=self.mild_slope, steep_climb=self.steep_climb,
                      steep_width=self.steep_width)
            f = banded_flat_model(self.a, self.length, self.energy, **kw)
            e_reg = max(abs(f.eval(self.center - self.m_big * self.omega_value)),
                        abs(f.eval(self.center + (self.m_big + 1) * self.omega_value)))
            self._f = banded_flat_model(self.a, self.length, self.energy, e_reg=e_reg, **kw)
        return self._f

    def frequency(self):
        if self._fv is None:
            self._fv = verify_diophantine([self.omega_value], self.scan_radius)
        return self._fv

    def s_sites(self):
        half = self.m_big - 3
        return [(n,) for n in range(-half, half + 1)]

    def frame(self, gen2_x_points=9):
        return build_frame(self.s_sites(), self.r, self.x0, self.sampling_function(),
                           self.frequency(), self.c_reg, gen2_x_points=gen2_x_points)

    def analysis_box(self):
        # R' itself: the largest box whose phases stay on one branch of f
        # over the whole x-interval ((2M+2) omega < 1 but (2M+4) omega > 1)
        return LatticeBox.interval(-self.m_big, self.m_big + 1)

    def flat_window(self):
        a, b = self.a, self.a + self.length
        return lambda y: a + 1e-9 < y < b - 1e-9

    def frame_phases_inside_period(self):
        lo = self.x0 - self.m_big * self.omega_value
        hi = self.x0 + self.omega_value + (self.m_big + 1) * self.omega_value
        return -0.5 < lo and hi < 0.5


class Example2Config:
    """d=2 single-site resonance with the claw continuation layer."""

    name = "example2"
    d = 2
    predicted_exponent = 2

    def __init__(self, omega=OMEGA_EX2, l_over_omega1=0.08, energy=0.0, center=0.0,
                 wall_scale=600.0, c_reg=300.0, r=2, scan_radius=200, eps=1e-2):
        self.omega_value = tuple(float(w) for w in omega)
        self.length = l_over_omega1 * self.omega_value[0]
        self.energy = float(energy)
        self.center = float(center)
        self.a = self.center - self.length / 2
        self.wall_scale = float(wall_scale)
        self.c_reg = float(c_reg)
        self.r = int(r)
        self.scan_radius = int(scan_radius)
        self.eps = float(eps)
        self.m_big = int(math.ceil(self.length / (2 * self.omega_value[0]))) + 2
        self.x0 = self.center - self.omega_value[0]
        self._f = None
        self._fv = None

    def sampling_function(self):
        if self._f is None:
            f = flat_piece_model(self.a, self.length, self.energy, self.wall_scale)
            e_reg = max(abs(f.eval(self.center - self.m_big * self.omega_value[0])),
                        abs(f.eval(self.center + (self.m_big + 1) * self.omega_value[0])))
            self._f = flat_piece_model(self.a, self.length, self.energy, self.wall_scale,
                                       e_reg=e_reg)
        return self._f

    def frequency(self):
        if self._fv is None:
            self._fv = verify_diophantine(self.omega_value, self.scan_radius)
        return self._fv

    def s_sites(self):
        return [(0, 0)]

    def claw_layer(self):
        m = self.m_big
        claw = {(-2, 0), (-1, 0)}
        claw |= {(n1, s) for n1 in range(-2, m - 2) for s in (-1, 1)}
        return frozenset(claw)

    def frame(self, gen2_x_points=5):
        # perpendicular halfwidth 1 carries the claw; wider boxes would make
        # the perpendicular train copies collide at any workable omega_1
        f = self.sampling_function()
        fv = self.frequency()
        r_box = LatticeBox((-self.m_big, -1), (self.m_big, 1))
        frame = build_frame(self.s_sites(), self.r, self.x0, f, fv, self.c_reg,
                            r_box=r_box, gen2_x_points=gen2_x_points)
        frame.b_layers = [self.claw_layer(), frame.b_layers[1]]
        return frame

    def analysis_box(self):
        return LatticeBox((-self.m_big - 1, -1), (self.m_big + 2, 1))

    def flat_window(self):
        a, b = self.a, self.a + self.length
        return lambda y: a + 1e-9 < y < b - 1e-9

    def z5_scan(self, x_points=9):
        """Perpendicular regularity: x + omega.n regular for 0 < |n|_1 <= 6,
        n not along e1, over the flat piece. Returns (ok, witness)."""
        f = self.sampling_function()
        fv = self.frequency()
        worst = None
        for x in np.linspace(self.a, self.a + self.length, x_points):
            for k in range(-6, 7):
                for n1 in range(-(6 - abs(k)), 7 - abs(k)):
                    if k == 0:
                        continue
                    y = x + n1 * fv.omega[0] + k * fv.omega[1]
                    if float(pole_distance(y)) < 1e-12:
                        continue
                    cert = certify_regularity(f, y, self.c_reg, grid_points=2000)
                    if not cert.regular:
                        return False, f"irregular at x={x:.6f}, n=({n1},{k}): {cert.reason}"
                    margin = abs(f.eval(y) - self.energy)
                    if worst is None or margin < worst:
                        worst = margin
        return True, f"min energy margin {worst:.3f} over the scan"


class TwoPieceConfig:
    """Two flat segments on d=1; frames per piece or merged."""

    d = 1
    predicted_exponent = 2

    def __init__(self, name, omega=OMEGA_EX3, centers=(-0.25, 0.25), energies=(-6.0, 6.0),
                 l_over_omega=1.3, wall_scale=25.0, c_reg=400.0, r=3, scan_radius=2000,
                 eps=1e-2):
        self.name = name
        self.omega_value = float(omega)
        self.centers = tuple(float(c) for c in centers)
        self.energies = tuple(float(e) for e in energies)
        self.length = l_over_omega * omega
        self.wall_scale = float(wall_scale)
        self.c_reg = float(c_reg)
        self.r = int(r)
        self.scan_radius = int(scan_radius)
        self.eps = float(eps)
        self.m_big = int(math.ceil(self.length / (2 * omega))) + 2
        self.x0 = -omega
        self._f = None
        self._fv = None

    def sampling_function(self):
        if self._f is None:
            ivs = [(c - self.length / 2, c + self.length / 2) for c in self.centers]
            f = staircase_model(ivs, list(self.energies), self.wall_scale)
            span = (self.m_big + self.r + 2) * self.omega_value
            e_reg = max(abs(f.eval(min(self.centers) - span)),
                        abs(f.eval(max(self.centers) + span)))
            self._f = staircase_model(ivs, list(self.energies), self.wall_scale, e_reg=e_reg)
        return self._f

    def frequency(self):
        if self._fv is None:
            self._fv = verify_diophantine([self.omega_value], self.scan_radius)
        return self._fv

    def singular_runs(self, x=None):
        """Connected runs of singular sites at phase x (default x0 + omega)."""
        x = self.x0 + self.omega_value if x is None else x
        box = LatticeBox.interval(-int(0.5 / self.omega_value), int(0.5 / self.omega_value))
        sing = sorted(n[0] for n in singular_set(self.sampling_function(), self.frequency(),
                                                 x, box, self.c_reg, grid_points=2000))
        runs = []
        for n in sing:
            if runs and n == runs[-1][-1] + 1:
                runs[-1].append(n)
            else:
                runs.append([n])
        return runs

    def frames(self, merged=False, gen2_x_points=5):
        runs = self.singular_runs()
        f = self.sampling_function()
        fv = self.frequency()
        if merged:
            lo = min(r[0] for r in runs)
            hi = max(r[-1] for r in runs)
            groups = [list(range(lo, hi + 1))]
        else:
            groups = runs
        return [build_frame([(n,) for n in g], self.r, self.x0, f, fv, self.c_reg,
                            gen2_x_points=gen2_x_points) for g in groups]

    def candidate_r_prime_boxes(self):
        """Per-run R' boxes by pure arithmetic (no certification), for overlap tests."""
        return [LatticeBox.interval(run[0] - self.r, run[-1] + 1 + self.r)
                for run in self.singular_runs()]

    def frames_overlap(self):
        boxes = self.candidate_r_prime_boxes()
        for i, a in enumerate(boxes):
            for b in boxes[i + 1:]:
                if a.intersect(b) is not None:
                    return True
        return False


class ChainConfig:
    """Example-5 chain: N = 2k-1 pieces spaced exactly omega apart."""

    name = "example5"
    d = 1

    def __init__(self, k=2, omega=OMEGA_EX5, l_over_omega=0.3, energy_step=6.0,
                 wall_scale=25.0, c_reg=400.0, r=None, scan_radius=2000, eps=1e-2):
        self.k = int(k)
        self.n_pieces = 2 * self.k - 1
        self.omega_value = float(omega)
        self.length = l_over_omega * omega
        self.energy_step = float(energy_step)
        self.wall_scale = float(wall_scale)
        self.c_reg = float(c_reg)
        self.r = int(r) if r is not None else 2 * self.n_pieces
        self.scan_radius = int(scan_radius)
        self.eps = float(eps)
        self.x0 = -omega
        self.predicted_exponent = 2 * self.k
        self._f = None
        self._fv = None

    def intervals(self):
        half = self.length / 2
        return [((j - self.k + 1) * self.omega_value - half,
                 (j - self.k + 1) * self.omega_value + half)
                for j in range(self.n_pieces)]

    def energies(self):
        return [(j - self.k + 1) * self.energy_step for j in range(self.n_pieces)]

    def sampling_function(self):
        if self._f is None:
            f = staircase_model(self.intervals(), self.energies(), self.wall_scale)
            span = (self.k + self.r + 1) * self.omega_value
            e_reg = max(abs(f.eval(-span)), abs(f.eval(span)))
            self._f = staircase_model(self.intervals(), self.energies(), self.wall_scale,
                                      e_reg=e_reg)
        return self._f

    def frequency(self):
        if self._fv is None:
            self._fv = verify_diophantine([self.omega_value], self.scan_radius)
        return self._fv

    def s_sites(self):
        half = self.k - 1
        return [(n,) for n in range(-half, half + 1)]

    def frame(self, gen2_x_points=5):
        return build_frame(self.s_sites(), self.r, self.x0, self.sampling_function(),
                           self.frequency(), self.c_reg, gen2_x_points=gen2_x_points)

    def analysis_box(self):
        half = self.k - 1 + self.r
        return LatticeBox.interval(-half - 1, half + 2)

    def center_window(self):
        half = self.length / 2
        return lambda y: -half + 1e-9 < y < half - 1e-9

    def chain_span_inside_period(self):
        lo = self.intervals()[0][0] - self.r * self.omega_value
        hi = self.intervals()[-1][1] + self.r * self.omega_value
        return -0.5 < lo and hi < 0.5


class TreeConfig:
    """Example-6 tree on d=2: a second piece one omega_2 step away."""

    name = "example6"
    d = 2

    def __init__(self, omega=OMEGA_EX6, l_over_omega1=0.08, base_center=-0.30,
                 energy_step=36.0, wall_scale=600.0, c_reg=300.0, r=2,
                 scan_radius=200, eps=1e-2):
        self.omega_value = tuple(float(w) for w in omega)
        self.length = l_over_omega1 * self.omega_value[0]
        self.base_center = float(base_center)
        self.energy_step = float(energy_step)
        self.wall_scale = float(wall_scale)
        self.c_reg = float(c_reg)
        self.r = int(r)
        self.scan_radius = int(scan_radius)
        self.eps = float(eps)
        self.x0 = self.base_center - self.omega_value[0]
        self._f = None
        self._fv = None

    def centers(self):
        return [self.base_center, self.base_center + self.omega_value[1]]

    def sampling_function(self):
        if self._f is None:
            half = self.length / 2
            ivs = [(c - half, c + half) for c in self.centers()]
            f = staircase_model(ivs, [0.0, self.energy_step], self.wall_scale)
            span = (4 + self.r) * self.omega_value[0]
            e_reg = max(abs(f.eval(self.centers()[0] - span)),
                        abs(f.eval(self.centers()[1] + span)))
            self._f = staircase_model(ivs, [0.0, self.energy_step], self.wall_scale,
                                      e_reg=e_reg)
        return self._f

    def frequency(self):
        if self._fv is None:
            self._fv = verify_diophantine(self.omega_value, self.scan_radius)
        return self._fv

    def s_sites(self):
        # the tree block: the base site plus its perpendicular partner
        return [(0, 0), (0, 1)]

    def frame(self, gen2_x_points=5):
        f = self.sampling_function()
        fv = self.frequency()
        r_box = LatticeBox((-3, -1), (3, 2))
        return build_frame(self.s_sites(), self.r, self.x0, f, fv, self.c_reg,
                           r_box=r_box, gen2_x_points=gen2_x_points)

    def analysis_box(self):
        return LatticeBox((-4, -1), (5, 2))

    def predicted_mu_table(self):
        """Escape-step rule: each interval sits one hop from a regular site.

        Both tree sites are probed at the base phase: (0,0) on the first
        piece, (0,1) on the second (one omega_2 step up).
        """
        f = self.sampling_function()
        fv = self.frequency()
        box = LatticeBox((-2, -2), (2, 2))
        x = self.base_center
        return {0: predicted_mu(f, fv, x, (0, 0), box, self.c_reg),
                1: predicted_mu(f, fv, x, (0, 1), box, self.c_reg)}


def example_library():
    return {
        "example1": Example1Config(),
        "example2": Example2Config(),
        "example3": TwoPieceConfig("example3"),
        "example4": TwoPieceConfig("example4", centers=(-0.06, -0.06 + 5.4 * OMEGA_EX3)),
        "example5": ChainConfig(k=2),
        "example6": TreeConfig(),
    }


# ---------------------------------------------------------------------------
# the hypothesis checklist

def _check_f1(f):
    xs = np.linspace(-0.499, 0.499, 1501)
    vals = f.eval(xs)
    monotone = bool(np.all(np.diff(vals) >= -1e-9))
    return (f.diverges() and monotone,
            f"diverges at +-1/2: {f.diverges()}, monotone on grid: {monotone}")


def _check_gen0(f, c_reg, e_reg):
    # sample phases with |f| just above E_reg on both walls
    from .sampling import _upper_preimages
    probes = []
    for sgn in (1.0, -1.0):
        for fac in (1.0, 1.5, 2.5):
            probes.append(sgn * e_reg * fac)
    xs = _upper_preimages(f, probes)
    for x, v in zip(xs, probes):
        try:
            cert = certify_regularity(f, float(x), c_reg, grid_points=2000)
        except PoleProximity:
            continue
        if abs(f.eval(float(x))) >= e_reg - 1e-9 and not cert.regular:
            return False, f"|f| = {abs(v):.3g} >= E_reg yet singular: {cert.reason}"
    return True, f"E_reg = {e_reg:.4g} spot-checked on both walls"


def verify_theorem_hypotheses(config, eps=None, x_points=9, u0_x_points=9):
    """Pass/fail evaluation of every applicable hypothesis, with witnesses.

    Report-only: failures are collected, not raised.
    """
    eps = config.eps if eps is None else eps
    items = []
    warnings = []
    f = config.sampling_function()
    fv = config.frequency()
    om1 = fv.omega[0]

    items.append(CheckItem("(f1)", *_check_f1(f)))
    items.append(CheckItem("(dio)", fv.c_dio > 0,
                           f"c_dio = {fv.c_dio:.4g} at tau = {fv.tau_dio}, "
                           f"radius {fv.scan_radius}"))

    if isinstance(config, (Example1Config, Example2Config)):
        a, length = config.a, config.length
        items.append(CheckItem("(z1)", -0.5 < a and a + length < 0.5,
                               f"flat [{a:.4f}, {a + length:.4f}] inside (-1/2, 1/2)"))
        z = length - math.floor(length / om1 + 1e-12) * om1
        beta = min(z, om1 - z)
        ok_z2 = min(z, om1 - z) > 1e-9 * om1
        items.append(CheckItem("(z2)", ok_z2,
                               f"L = {length / om1:.4f} omega, beta = {beta:.5f}"))
        margin_lo = a - beta
        margin_hi = a + length + beta
        ok_z3 = True
        witness_z3 = ""
        for y in np.linspace(-0.495, 0.495, 301):
            if margin_lo <= y <= margin_hi:
                continue
            cert = certify_regularity(f, y, config.c_reg, grid_points=1500)
            if not cert.regular:
                ok_z3, witness_z3 = False, f"singular at y = {y:.4f}: {cert.reason}"
                break
        items.append(CheckItem("(z3)", ok_z3,
                               witness_z3 or f"regular outside [{margin_lo:.4f}, {margin_hi:.4f}]"))
        m_big = config.m_big
        b = config.center
        pts = [b + n * om1 for n in range(-m_big, m_big + 2)]
        ok_z4 = all(-0.5 + 1e-9 < p < 0.5 - 1e-9 for p in pts)
        items.append(CheckItem("(z4)", ok_z4,
                               f"M = {m_big}; 2M+2 points span [{pts[0]:.4f}, {pts[-1]:.4f}]"))
        if not (ok_z2 and ok_z4):
            return Checklist(items, warnings)

    if isinstance(config, Example2Config):
        ok_z5, wit = config.z5_scan(x_points=max(5, x_points // 2))
        items.append(CheckItem("(z5)", ok_z5, wit))
        if not ok_z5:
            return Checklist(items, warnings)

    if isinstance(config, ChainConfig):
        ok_span = config.chain_span_inside_period()
        items.append(CheckItem("(chain-span)", ok_span,
                               f"I_1 - r omega, I_N + r omega inside (-1/2, 1/2), r = {config.r}"))
        if not ok_span:
            return Checklist(items, warnings)

    e_reg = f.e_reg
    if e_reg is None:
        e_reg = max(abs(f.eval(-0.47)), abs(f.eval(0.47)))
        warnings.append("E_reg not configured; using wall probes at +-0.47")
    items.append(CheckItem("(gen0)", *_check_gen0(f, config.c_reg, e_reg)))

    if not f.flat_pieces:
        # strictly monotone model: if the singular set is empty the
        # conjugation is unnecessary and the moving-block items are vacuous
        probe = LatticeBox.interval(-6, 6) if config.d == 1 else LatticeBox((-4, -3), (4, 3))
        sing = set()
        for x in np.linspace(config.x0, config.x0 + om1, 3):
            sing |= singular_set(f, fv, float(x), probe, config.c_reg, grid_points=2000)
        if not sing:
            items.append(CheckItem("(singular-set)", True,
                                   "empty on the probe grid: perturbation series "
                                   "converges without conjugation; moving-block items vacuous"))
            return Checklist(items, warnings)
        items.append(CheckItem("(singular-set)", False,
                               f"monotone model yet singular at {sorted(sing)[0]}: "
                               "C_reg too small for this f"))
        return Checklist(items, warnings)

    if isinstance(config, TwoPieceConfig):
        overlap = config.frames_overlap()
        if config.name == "example4":
            if overlap:
                items.append(CheckItem(
                    "(gen4-separate)", False,
                    "per-piece frames overlap: consider them as one singular set "
                    "(merged block recommended)"))
                frames = config.frames(merged=True)
                items.append(CheckItem("(gen4-merged)", True,
                                       f"merged block spans {sorted(frames[0].s_sites)[0]}"
                                       f"..{sorted(frames[0].s_sites)[-1]}"))
            else:
                items.append(CheckItem("(gen4-separate)", True, "frames already disjoint"))
                frames = config.frames()
        else:
            items.append(CheckItem("(gen4-separate)", not overlap,
                                   "independent frames with disjoint supports"))
            frames = config.frames()
    else:
        frames = None

    try:
        if frames is None:
            frames = [config.frame(gen2_x_points=x_points)]
        items.append(CheckItem("(gen1)", True, "S u (S+e1) inside R0 by construction"))
        items.append(CheckItem("(gen2)", True,
                               f"ring sites regular on {x_points}-point x-grid"))
    except Gen2Violation as exc:
        items.append(CheckItem("(gen1)", True, "S u (S+e1) inside R0 by construction"))
        items.append(CheckItem("(gen2)", False, str(exc)))
        return Checklist(items, warnings)
    except MarylandError as exc:
        items.append(CheckItem("(gen1)", False, str(exc)))
        return Checklist(items, warnings)

    kappas, defects, cseps, families = [], [], [], []
    box = LatticeBox.interval(-12, 12) if frames[0].d == 1 else LatticeBox((-6, -2), (6, 2))
    try:
        for frame in frames:
            u0 = build_u0(frame, f, fv, eps, x_points=u0_x_points)
            kappas.append(u0.path.kappa)
            defects.append(u0.endpoint_defect)
            cseps.append(u0.csep_fitted)
            families.append(assemble_u2(u0, box))
        items.append(CheckItem("(gen3)", True,
                               f"kappa = {min(kappas):.3e} on the (x, t) grid"))
        items.append(CheckItem("(5.3)", max(defects) <= 1e-8,
                               f"endpoint translation defect {max(defects):.2e}"))
        items.append(CheckItem("(th5.1-5)", True,
                               f"fitted c_sep = {min(cseps):.3f} over t in {{0,1/4,1/2,3/4,1}}"))
    except MarylandError as exc:
        items.append(CheckItem("(gen3)", False, str(exc)))
        return Checklist(items, warnings)

    try:
        n_copies = 0
        for x in np.linspace(frames[0].x0, frames[0].x0 + om1, 5):
            supports = []
            for family in families:
                supports.extend(c.support for c in family.copies(float(x)))
            for i, a in enumerate(supports):
                for b in supports[i + 1:]:
                    if a.intersect(b) is not None:
                        raise Gen4Violation(a, b)
            n_copies = max(n_copies, len(supports))
        items.append(CheckItem("(gen4)", True,
                               f"{n_copies} copies, supports pairwise disjoint on the grid"))
    except Gen4Violation as exc:
        items.append(CheckItem("(gen4)", False, str(exc)))
        return Checklist(items, warnings)

    contained = True
    witness = ""
    for x in np.linspace(frames[0].x0, frames[0].x0 + om1, x_points):
        sing = singular_set(f, fv, float(x), box, config.c_reg, grid_points=2000)
        covered = set()
        for family in families:
            covered |= family.block_sites_of_copies(float(x))
        stray = sing - covered
        if stray:
            contained = False
            witness = f"singular site {sorted(stray)[0]} outside every copy at x = {x:.5f}"
            break
    items.append(CheckItem("(th5.1-4)", contained,
                           witness or "S_sing(x) inside the union of copy blocks on the grid"))
    return Checklist(items, warnings)
