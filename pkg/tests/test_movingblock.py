"""Moving-block frames, covariant assembly, conjugation, exponent fits."""

import numpy as np
import pytest

from marylandlab.boxes import LatticeBox
from marylandlab.errors import FrameMismatch, Gen2Violation, Gen4Violation, SeparationViolation
from marylandlab.library import ChainConfig, example_library
from marylandlab.movingblock import (
    BlockFrame,
    MovingBlockFamily,
    assemble_u2,
    build_frame,
    build_u0,
    conjugate_and_extract,
    displayed_power_matrix,
    endpoint_translation_defect,
    escape_cost,
    fit_mu,
    pattern_exponents,
    predicted_mu,
    residual_edge_exponents,
)
from marylandlab.blockdiag import ducp_reach, unique_continuation_lower_bound
from marylandlab.operators import interpolated_block
from marylandlab.sampling import singular_set

CFG = example_library()["example1"]
F = CFG.sampling_function()
FV = CFG.frequency()
EPS = 1e-2


@pytest.fixture(scope="module")
def frame():
    return CFG.frame()


@pytest.fixture(scope="module")
def u0(frame):
    return build_u0(frame, F, FV, EPS, x_points=9)


@pytest.fixture(scope="module")
def family(u0):
    return assemble_u2(u0, CFG.analysis_box())


# ---------------------------------------------------------------------------
# frame geometry

def test_frame_matches_paper_box(frame):
    m = CFG.m_big
    assert frame.r_prime_box == LatticeBox.interval(-m, m + 1)
    assert frame.r_minus == {(-m,)}
    assert frame.r_plus == {(m + 1,)}
    assert frame.block == {(n,) for n in range(-m + 3, m - 1)}
    assert frame._separation_radius() == 3


def test_frame_rejects_empty_block():
    with pytest.raises(FrameMismatch):
        build_frame([], 3, CFG.x0, F, FV, CFG.c_reg)


def test_frame_rejects_insufficient_radius():
    box = LatticeBox.interval(-3, 3)  # too small for S = [-2, 2] at r = 3
    with pytest.raises(FrameMismatch):
        BlockFrame(CFG.s_sites(), box, CFG.x0, FV, CFG.c_reg, r=3)


def test_gen2_violation_when_ring_hits_the_piece():
    # dropping the rightmost singular site from S puts it on the ring
    bad_s = CFG.s_sites()[:-1]
    with pytest.raises(Gen2Violation):
        build_frame(bad_s, 3, CFG.x0, F, FV, CFG.c_reg, gen2_x_points=5)


def test_b_layer_choice_picks_clear_side(frame):
    layer = frame.b_layer_choice(F, CFG.x0 + 0.5 * FV.omega1)
    assert layer in frame.b_layers
    assert layer.isdisjoint(frame.block)


# ---------------------------------------------------------------------------
# U_0

def test_u0_identity_at_zero_hopping(frame):
    u0_flat = build_u0(frame, F, FV, 0.0, x_points=3)
    for u in u0_flat.path.frames:
        assert np.allclose(u, np.eye(frame.r_prime_box.size), atol=1e-12)


def test_u0_endpoint_split_and_translation(u0):
    assert u0.endpoint_defect <= 1e-8
    assert endpoint_translation_defect(u0) == u0.endpoint_defect


def test_u0_csep_separation(u0):
    assert u0.csep_fitted > 0.1
    with pytest.raises(SeparationViolation):
        build_u0(u0.frame, F, FV, EPS, x_points=3, c_sep=10 * u0.csep_fitted)


def test_u0_covariant_support_drift(u0):
    x = CFG.x0 + 0.3 * FV.omega1
    box0, mat0, _ = u0.frame_at(x)
    box1, mat1, _ = u0.frame_at(x + FV.omega1)
    assert box1 == box0.shifted((-1,))
    assert np.array_equal(mat0, mat1)


def test_u0_regular_columns_near_identity(u0):
    box = u0.frame.r_prime_box
    eye = np.eye(box.size)
    for u in u0.path.frames:
        for n in sorted(set(box.site_tuples()) - u0.frame.block):
            j = box.index(n)
            # |psi_j - e_j| <= C eps with C < 10 (nearest diagonal gaps ~0.3)
            assert np.linalg.norm(u[:, j] - eye[:, j]) <= 10.0 * EPS


# ---------------------------------------------------------------------------
# U_1 / U_2 assembly

def test_copies_disjoint_and_spaced(family):
    x = CFG.x0 + 0.4 * FV.omega1
    copies = family.copies(x)
    assert len(copies) >= 3
    for a, b in zip(copies, copies[1:]):
        assert a.support.hi[0] < b.support.lo[0]


def test_single_copy_is_padded_u0(u0):
    small = LatticeBox.interval(-4, 5)
    fam = MovingBlockFamily(u0, small, pad=0)
    x = CFG.x0 + 0.4 * FV.omega1
    u2 = fam.u2_matrix(x, fam.padded_box)
    support, base, _ = u0.frame_at(x)
    idx = [fam.padded_box.index(n) for n in support.site_tuples()]
    assert np.array_equal(u2[np.ix_(idx, idx)], base)
    off = np.delete(np.arange(fam.padded_box.size), idx)
    assert np.array_equal(u2[np.ix_(off, off)], np.eye(len(off)))


def test_gen4_violation_with_oversized_frame():
    # r = 4 makes the support span 14 > the train spacing 13
    fat = build_frame(CFG.s_sites(), 4, CFG.x0, F, FV, CFG.c_reg, gen2_x_points=3)
    u0_fat = build_u0(fat, F, FV, EPS, x_points=3)
    with pytest.raises(Gen4Violation):
        assemble_u2(u0_fat, CFG.analysis_box())


def test_u2_quasiperiodicity_on_overlap_box(family):
    # U2(x + omega1)[m - e1, n - e1] == U2(x)[m, n] where both sides live
    x = CFG.x0 + 0.23 * FV.omega1
    u2a = family.u2_matrix(x)
    u2b = family.u2_matrix(x + FV.omega1)
    box = family.padded_box
    inner = family.analysis_box  # rim copies differ by the relevance filter
    ia = [box.index(n) for n in inner.site_tuples()]
    ib = [box.index((n[0] - 1,)) for n in inner.site_tuples()]
    assert np.abs(u2b[np.ix_(ib, ib)] - u2a[np.ix_(ia, ia)]).max() <= 1e-8


def test_u2_full_covariance_d2():
    cfg2 = example_library()["example2"]
    f2, fv2 = cfg2.sampling_function(), cfg2.frequency()
    frame2 = cfg2.frame(gen2_x_points=3)
    u02 = build_u0(frame2, f2, fv2, EPS, x_points=5)
    fam2 = assemble_u2(u02, cfg2.analysis_box(), x_check_points=3)
    box = fam2.padded_box
    x = cfg2.x0 + 0.37 * fv2.omega1
    inner = cfg2.analysis_box()
    for shift in [(1, 0), (0, 1)]:
        xa = x + fv2.dot(shift)
        u2a = fam2.u2_matrix(x)
        u2b = fam2.u2_matrix(xa)
        pairs = [(n, tuple(c - s for c, s in zip(n, shift))) for n in inner.site_tuples()
                 if tuple(c - s for c, s in zip(n, shift)) in inner]
        ia = [box.index(a) for a, _ in pairs]
        ib = [box.index(b) for _, b in pairs]
        assert np.abs(u2b[np.ix_(ib, ib)] - u2a[np.ix_(ia, ia)]).max() <= 1e-8


def test_singular_set_covered_by_copies(family):
    for x in np.linspace(CFG.x0, CFG.x0 + FV.omega1, 5):
        sing = singular_set(F, FV, float(x), family.analysis_box, CFG.c_reg,
                            grid_points=2000)
        assert sing <= family.block_sites_of_copies(float(x))


# ---------------------------------------------------------------------------
# conjugation

@pytest.fixture(scope="module")
def conj(family):
    xs = np.linspace(CFG.x0, CFG.x0 + FV.omega1, 5)[:-1]
    return conjugate_and_extract(family, x_grid=xs)


def test_conjugation_unitarity_and_spectra(conj):
    assert conj.unitarity_defect <= 1e-9
    assert conj.spectra_defect <= 1e-8


def test_strat2_exact_block_eigenvalues(conj):
    assert conj.strat2_defect <= 1e-8


def test_f2_covariance_and_single_valuedness(conj):
    assert conj.covariance_defect <= 1e-6
    assert conj.f2_spread <= 1e-6


def test_f2_regular_inheritance(conj):
    # at regular sites f2' keeps at least half the bare derivative floor
    d_min = min(F.eval_derivative(r.y) for r in conj.f2_rows if r.regular)
    assert conj.regular_floor() >= d_min / 2


def test_f2_singular_floor_scale(conj):
    floor = conj.singular_floor(CFG.flat_window())
    assert 0.05 * EPS**2 < floor < 5 * EPS**2


def test_eps_zero_conjugation_is_identity():
    frame = CFG.frame()
    u0_zero = build_u0(frame, F, FV, 0.0, x_points=3)
    fam = assemble_u2(u0_zero, CFG.analysis_box())
    conj0 = conjugate_and_extract(fam, x_grid=[CFG.x0 + 0.3 * FV.omega1])
    for r in conj0.f2_rows:
        assert r.value == pytest.approx(F.eval(r.y), abs=1e-12)


def test_diag_mode_gap_reported(conj):
    # the declared deviation (true-x vs interpolated diagonal) is surfaced
    assert conj.diag_mode_gap > 0


# ---------------------------------------------------------------------------
# exponent fits

def test_displayed_pattern_matches_paper_matrix(frame):
    # the verbatim 12x12 exponent matrix for M = 5
    rows = [
        [0, 1, 2, 3, 3, 3, 3, 3, 3, 9, 10, 11],
        [1, 0, 1, 2, 2, 2, 2, 2, 2, 8, 9, 10],
        [2, 1, 0, 1, 1, 1, 1, 1, 1, 7, 8, 9],
        [3, 2, 1, 0, 0, 0, 0, 0, 0, 6, 7, 8],
        [4, 3, 2, 0, 0, 0, 0, 0, 0, 5, 6, 7],
        [5, 4, 3, 0, 0, 0, 0, 0, 0, 4, 5, 6],
        [6, 5, 4, 0, 0, 0, 0, 0, 0, 3, 4, 5],
        [7, 6, 5, 0, 0, 0, 0, 0, 0, 2, 3, 4],
        [8, 7, 6, 0, 0, 0, 0, 0, 0, 1, 2, 3],
        [9, 8, 7, 1, 1, 1, 1, 1, 1, 0, 1, 2],
        [10, 9, 8, 2, 2, 2, 2, 2, 2, 1, 0, 1],
        [11, 10, 9, 3, 3, 3, 3, 3, 3, 2, 1, 0],
    ]
    assert np.array_equal(displayed_power_matrix(frame), np.array(rows, dtype=float))


def test_pattern_exponents_not_worse_than_displayed(frame):
    slopes = pattern_exponents(frame, F, FV, [1e-1, 10**-1.5, 1e-2],
                               CFG.x0 + 0.37 * FV.omega1)
    disp = displayed_power_matrix(frame)
    assert np.all(slopes >= disp - 0.35)
    within = np.sum(slopes <= disp + 1.35)
    assert within >= 0.9 * disp.size


def test_residual_exponents_at_least_three(frame):
    exps = residual_edge_exponents(frame, F, FV, [1e-1, 10**-1.5, 1e-2],
                                   CFG.x0 + 0.37 * FV.omega1, pad=2, dps=50)
    fitted = {e: p for e, p in exps.items() if p is not None}
    assert fitted
    assert min(fitted.values()) >= 3.0 - 0.3


def test_mu_fit_example1(frame):
    mu = fit_mu(frame, F, FV, [1e-2, 10**-2.5, 1e-3], CFG.flat_window(), x_points=7)
    assert mu.slope == pytest.approx(2.0, abs=0.2)
    lo, hi = mu.stable_constant()
    assert hi / lo < 1.5


# ---------------------------------------------------------------------------
# unique continuation on the block

def test_singular_eigenvector_mass_on_b_layer(u0):
    x = CFG.x0 + 0.41 * FV.omega1
    frame = u0.frame
    support, labels, u_mat, w = u0.block_eigendata(x)
    h_prime = interpolated_block(F, FV, EPS, x, frame.x0, frame)
    a_set = set(frame.block)
    b_set = {(-4,), (-3,)}  # the one-sided two-site layer of the d=1 argument
    reach = ducp_reach(a_set, b_set)
    assert reach.certified
    union_idx = [support.index(n) for n in sorted(a_set | b_set)]
    w_bound = max(abs(h_prime.diagonal[support.index(n)]) for n in sorted(a_set | b_set))
    observed_inner = []
    for n in sorted(frame.block):
        j = support.index(n)
        psi = u_mat[:, j].copy()
        norm = np.linalg.norm(psi[union_idx])
        psi /= norm
        site, bound, observed = unique_continuation_lower_bound(
            h_prime, psi, float(w[j]), reach, w_bound)
        assert observed >= bound
        observed_inner.append(observed)
    # every singular branch leaves at least c*eps on the layer (c fitted ~0.03)
    assert min(observed_inner) >= 0.02 * EPS
    # the chosen layer alternative is certified too
    reach_choice = ducp_reach(a_set, set(frame.b_layer_choice(F, x)))
    assert reach_choice.certified


# ---------------------------------------------------------------------------
# escape costs

def test_escape_costs_and_predicted_mu():
    box = LatticeBox.interval(-8, 8)
    assert predicted_mu(F, FV, CFG.center, (0,), box, CFG.c_reg) == 2
    chain = ChainConfig(k=2)
    fc, fvc = chain.sampling_function(), chain.frequency()
    assert predicted_mu(fc, fvc, 0.0, (0,), box, chain.c_reg) == 4  # center interval
    assert predicted_mu(fc, fvc, 0.0, (-1,), box, chain.c_reg) == 2
    assert predicted_mu(fc, fvc, 0.0, (1,), box, chain.c_reg) == 2
    assert escape_cost(fc, fvc, 0.0, (4,), box, chain.c_reg) == 0  # regular site


# ---------------------------------------------------------------------------
# residual coupling graph and derivative exponents

def test_residual_graph_conv_conditions(frame):
    from marylandlab.operators import graph_from_exponents

    exps, dexps = residual_edge_exponents(frame, F, FV, [1e-1, 10**-1.5, 1e-2],
                                          CFG.x0 + 0.37 * FV.omega1, pad=2, dps=60,
                                          derivatives=True)
    graph = graph_from_exponents(exps)
    # every edge leaving a singular site has ladder length >= mu + 1 = 3
    for n in frame.block_sites():
        length = graph.min_length_at(n)
        assert length is None or length >= 3
    # derivatives lose at most one power of eps against the entries
    for edge, p in exps.items():
        d = dexps.get(edge)
        if p is not None and d is not None:
            assert d >= p - 1.3


def test_largest_entry_bound_example1_window():
    from marylandlab.operators import largest_entry_bound

    box = CFG.analysis_box()
    worst = 0.0
    for x in np.linspace(CFG.x0, CFG.x0 + FV.omega1, 9):
        w = largest_entry_bound(F, FV, float(x), box)
        worst = max(worst, w)
        assert w <= F.e_reg + 1e-9
    assert worst > 0


def test_example3_commuting_u2_factors():
    cfg3 = example_library()["example3"]
    f3, fv3 = cfg3.sampling_function(), cfg3.frequency()
    frames = cfg3.frames(gen2_x_points=3)
    assert len(frames) == 2
    analysis = LatticeBox.interval(-12, 12)
    shared = LatticeBox.interval(-26, 26)
    x = cfg3.x0 + 0.4 * fv3.omega1
    mats = []
    for fr in frames:
        u0x = build_u0(fr, f3, fv3, 1e-2, x_points=3)
        fam = MovingBlockFamily(u0x, analysis, pad=0)
        mats.append(fam.u2_matrix(x, shared))
    a, b = mats
    # the two conjugations act on disjoint supports, so they commute exactly
    assert not np.array_equal(a, np.eye(shared.size))
    assert not np.array_equal(b, np.eye(shared.size))
    assert np.array_equal(a @ b, b @ a)
