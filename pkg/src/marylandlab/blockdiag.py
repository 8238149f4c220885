"""Homotopy diagonalization, cluster decay, and discrete unique continuation.

The canonical orthogonal frame of a symmetric family A_t(x) is selected
by continuation from large t, where the fractional-part tilt orders the
eigenvalues by lattice site and every eigenvector hugs a coordinate
vector: columns are matched down the t-schedule by maximal overlap with
positive inner product, so the t=0 frame inherits the labeling and the
sign convention. Per-x continuations are independent.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.optimize import linear_sum_assignment

from .boxes import as_site, l1_dist, set_dist
from .errors import (
    AssignmentAmbiguity,
    GapCollapse,
    GapTooSmall,
    HypothesisViolation,
    NormTooSmall,
    SignFlip,
)

OVERLAP_FLOOR = 0.5


# ---------------------------------------------------------------------------
# homotopy frames

@dataclasses.dataclass
class DiagonalizerPath:
    x_grid: np.ndarray
    frames: list              # per grid point, orthogonal (N, N), column j ~ site j
    eigenvalues: list         # per grid point, (N,) in column order
    t_schedule: np.ndarray
    kappa: float              # smallest eigenvalue gap met along all (x, t) walks
    column_deviation: np.ndarray  # per column, max over x of ||psi_j - e_j||

    @property
    def n(self):
        return self.frames[0].shape[0]

    def min_adjacent_overlap(self):
        """Continuity diagnostic: worst <psi_j(x_i), psi_j(x_{i+1})> over the grid."""
        worst = 1.0
        for a, b in zip(self.frames, self.frames[1:]):
            worst = min(worst, float(np.min(np.sum(a * b, axis=0))))
        return worst

    def orthogonality_defect(self):
        return max(float(np.abs(u.T @ u - np.eye(self.n)).max()) for u in self.frames)


def _t_schedule(t_max, steps):
    """Geometric walk from t_max down, then the final 0.

    The floor sits 8 decades below t_max so the final jump to t = 0
    perturbs the spectrum by far less than any eps-scale block gap.
    """
    floor = 1e-8 * t_max
    ratio = (floor / t_max) ** (1.0 / max(steps - 2, 1))
    ts = t_max * ratio ** np.arange(steps - 1)
    return np.append(ts, 0.0)


def _default_t_max(a_family, x):
    a0 = np.asarray(a_family(x, 0.0), dtype=float)
    tilt = np.diag(np.asarray(a_family(x, 1.0), dtype=float) - a0)
    u = np.sort(tilt)
    du = float(np.diff(u).min()) if len(u) > 1 else 1.0
    du = max(du, 1e-9)
    spread = float(a0.diagonal().max() - a0.diagonal().min())
    off = a0 - np.diag(a0.diagonal())
    return max(8.0, 4.0 * (spread + np.abs(off).sum(axis=1).max()) / du)


def _match_columns(prev, q):
    """Permute and sign-fix columns of q to follow the frame prev."""
    overlap = prev.T @ q
    rows, cols = linear_sum_assignment(-np.abs(overlap))
    perm = np.empty_like(cols)
    perm[rows] = cols
    qp = q[:, perm]
    signs = np.sign(np.sum(prev * qp, axis=0))
    signs[signs == 0] = 1.0
    qp = qp * signs
    min_overlap = float(np.min(np.abs(overlap[rows, cols])))
    return qp, perm, min_overlap


def _walk_down(a_family, x, schedule, gap_floor):
    prev = np.eye(np.asarray(a_family(x, schedule[0]), dtype=float).shape[0])
    kappa = np.inf
    evals = None
    for t in schedule:
        a = np.asarray(a_family(x, t), dtype=float)
        w, q = np.linalg.eigh(a)
        gap = float(np.diff(w).min()) if len(w) > 1 else np.inf
        if gap < gap_floor:
            raise GapCollapse(x, t, gap)
        kappa = min(kappa, gap)
        qp, perm, min_overlap = _match_columns(prev, q)
        if min_overlap < OVERLAP_FLOOR:
            raise SignFlip(f"overlap {min_overlap:.3f} at x={x!r}, t={t!r}")
        prev = qp
        evals = w[perm]
    return prev, evals, kappa


def diagonalize_homotopy(a_family, x_grid, t_max=None, t_steps=64, gap_floor=1e-8,
                         regular_columns=None):
    """Canonical frames U(x) for the family A_t(x) at t = 0.

    a_family(x, t) -> symmetric matrix whose diagonal is tilted linearly
    in t (any family works; the default t_max is calibrated from the tilt
    rates so the top of the schedule is diagonally ordered).

    regular_columns: optional callable x -> bool mask; deviations
    ||psi_j - e_j|| are recorded for all columns, the mask marks which
    ones the Lipschitz-monotone conclusion applies to.

    Raises GapCollapse when eigenvalues collide, SignFlip when matching
    degrades below 0.5 after one automatic schedule refinement.
    """
    x_grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
    frames, evals_list = [], []
    kappa = np.inf
    n = np.asarray(a_family(x_grid[0], 0.0)).shape[0]
    deviation = np.zeros(n)
    schedule_used = None
    for x in x_grid:
        tm = t_max if t_max is not None else _default_t_max(a_family, x)
        schedule = _t_schedule(tm, t_steps)
        try:
            u, w, kap = _walk_down(a_family, x, schedule, gap_floor)
        except SignFlip:
            schedule = _t_schedule(tm, 2 * t_steps)
            u, w, kap = _walk_down(a_family, x, schedule, gap_floor)
        schedule_used = schedule
        frames.append(u)
        evals_list.append(w)
        kappa = min(kappa, kap)
        dev = np.linalg.norm(u - np.eye(n), axis=0)
        if regular_columns is not None:
            dev = np.where(regular_columns(x), dev, 0.0)
        deviation = np.maximum(deviation, dev)
    return DiagonalizerPath(x_grid, frames, evals_list, schedule_used, float(kappa), deviation)


# ---------------------------------------------------------------------------
# Jacobi separation

def jacobi_separation(j_matrix, window_length, relax_endpoints=True):
    """Smallest eigenvalue gap of a Jacobi matrix with unit off-diagonals
    and diagonal confined to a length-L window (endpoints may be relaxed).

    The caller compares the result against a fitted c(N, L); rescaling by
    eps gives the c(N, eps L) eps version.
    """
    j = np.asarray(j_matrix, dtype=float)
    n = j.shape[0]
    if j.shape != (n, n) or not np.allclose(j, j.T, atol=1e-13):
        raise HypothesisViolation("matrix is not symmetric")
    for i in range(n):
        for k in range(i + 2, n):
            if abs(j[i, k]) > 1e-14:
                raise HypothesisViolation(f"entry ({i}, {k}) = {j[i, k]} breaks tridiagonality")
    for i in range(n - 1):
        if abs(j[i, i + 1]) < 1.0 - 1e-12:
            raise HypothesisViolation(f"|J[{i},{i + 1}]| = {abs(j[i, i + 1]):.3g} < 1")
    diag = j.diagonal()
    interior = diag[1:-1] if (relax_endpoints and n > 2) else diag
    if len(interior) and interior.max() - interior.min() > window_length + 1e-12:
        raise HypothesisViolation(
            f"diagonal span {interior.max() - interior.min():.3g} exceeds window {window_length}")
    w = np.linalg.eigvalsh(j)
    return float(np.diff(w).min())


# ---------------------------------------------------------------------------
# cluster structure

@dataclasses.dataclass
class ClusterPartition:
    clusters: list          # list of site collections, disjoint, covering the box
    eta: float              # certified cross-cluster diagonal separation
    delta: float = None     # spectral gap of a tracked eigenvalue, when relevant
    w_bound: float = None   # energy bound of Prop-largest type

    def __post_init__(self):
        self.clusters = [frozenset(as_site(n) for n in c) for c in self.clusters]
        seen = set()
        for c in self.clusters:
            if seen & c:
                raise ValueError("clusters overlap")
            seen |= c

    def cluster_of(self, site):
        site = as_site(site)
        for i, c in enumerate(self.clusters):
            if site in c:
                return i
        raise KeyError(site)

    def verify_separation(self, h):
        worst = np.inf
        for i, ci in enumerate(self.clusters):
            vi = [h.diagonal[h.box.index(n)] for n in ci]
            for cj in self.clusters[i + 1:]:
                vj = [h.diagonal[h.box.index(n)] for n in cj]
                worst = min(worst, min(abs(a - b) for a in vi for b in vj))
        if worst < self.eta:
            raise HypothesisViolation(
                f"cross-cluster separation {worst:.3g} below eta = {self.eta}")
        return float(worst)


@dataclasses.dataclass
class ClusterDecayReport:
    assignments: list      # eigenvector index -> cluster index
    c_eta: float           # smallest C with |psi(n)| <= C eta^(-dist)
    c_eps: float           # smallest C with |psi(n)| <= C eps^(dist)
    masses: np.ndarray     # per eigenvector, mass inside its cluster
    c_eta_decay: float = 0.0  # same constants fitted on off-cluster sites only
    c_eps_decay: float = 0.0


def cluster_decay_check(h, partition):
    """Eigenbasis decay away from eta-separated diagonal clusters.

    The all-site constants are dominated by the trivial on-cluster entry
    (~1); the *_decay variants fit only sites at distance >= 1 and expose
    the actual decay prefactor.
    """
    partition.verify_separation(h)
    covered = set().union(*partition.clusters)
    if covered != set(h.box.site_tuples()):
        raise ValueError("clusters must cover the box")
    evals, evecs = h.eigh()
    sites = h.box.site_tuples()
    dists = np.array([[set_dist(n, c) for n in sites] for c in partition.clusters])
    c_eta = c_eps = c_eta_decay = c_eps_decay = 0.0
    assignments = []
    masses = []
    for k in range(len(evals)):
        psi = evecs[:, k]
        mass = np.array([float(np.sum(psi[[h.box.index(n) for n in c]] ** 2))
                         for c in partition.clusters])
        j = int(np.argmax(mass))
        if mass[j] < 0.5:
            raise AssignmentAmbiguity(
                f"eigenvector {k} has at most {mass[j]:.2f} mass in every cluster")
        assignments.append(j)
        masses.append(mass[j])
        d = dists[j].astype(float)
        away = d >= 1
        c_eta = max(c_eta, float(np.max(np.abs(psi) * partition.eta ** d)))
        if np.any(away):
            c_eta_decay = max(c_eta_decay,
                              float(np.max(np.abs(psi[away]) * partition.eta ** d[away])))
        if h.eps > 0:
            c_eps = max(c_eps, float(np.max(np.abs(psi) * h.eps ** (-d))))
            if np.any(away):
                c_eps_decay = max(c_eps_decay,
                                  float(np.max(np.abs(psi[away]) * h.eps ** (-d[away]))))
    return ClusterDecayReport(assignments, c_eta, c_eps, np.array(masses),
                              c_eta_decay, c_eps_decay)


@dataclasses.dataclass
class DropReport:
    max_shift: float
    fitted_c: float        # max_shift * eta / eps^2
    shifts: np.ndarray


def partial_2x2_drop(h, partition):
    """Zero the inter-cluster edges; eigenvalues move by at most C eps^2 / eta."""
    partition.verify_separation(h)
    if h.eps >= partition.eta:
        raise HypothesisViolation(f"eps = {h.eps} not below eta = {partition.eta}")
    from .operators import FiniteOperator
    weights = {}
    for (i, k), w in h.weights.items():
        same = partition.cluster_of(h.box.site(i)) == partition.cluster_of(h.box.site(k))
        if same:
            weights[(i, k)] = w
    dropped = FiniteOperator(h.box, h.eps, h.diagonal, weights)
    shifts = np.abs(np.sort(h.spectrum()) - np.sort(dropped.spectrum()))
    max_shift = float(shifts.max())
    fitted = max_shift * partition.eta / h.eps**2 if h.eps > 0 else 0.0
    return dropped, DropReport(max_shift, fitted, shifts)


def projection_derivative_bound(h0, site_k, fprime_t0, t0, partition, target_energy,
                                f_of_t=None, gap_floor=1e-8, fd_step=1e-6):
    """Finite-difference dP/dt for H(t) = H0 + f(t) <e_k,.> e_k against the
    resolvent bound C |f'| delta^-1 eta^(-dist(A_r,k)-dist(k,A_s)).

    Returns (dP, bound matrix, fitted C). f_of_t defaults to f(t) = f(t0) +
    fprime_t0 * (t - t0), which has the stated derivative at t0.
    """
    if f_of_t is None:
        f_of_t = lambda t: fprime_t0 * (t - t0)
    k_idx = h0.box.index(site_k)
    base = h0.matrix()

    def solve(t):
        a = base.copy()
        a[k_idx, k_idx] += f_of_t(t)
        w, q = np.linalg.eigh(a)
        j = int(np.argmin(np.abs(w - target_energy)))
        gaps = np.abs(np.delete(w, j) - w[j])
        if gaps.size and gaps.min() < gap_floor:
            raise GapTooSmall(f"gap {gaps.min():.2e} below {gap_floor:.1e}")
        psi = q[:, j]
        return np.outer(psi, psi), float(gaps.min()) if gaps.size else np.inf

    p_plus, _ = solve(t0 + fd_step)
    p_minus, _ = solve(t0 - fd_step)
    _, delta = solve(t0)
    dp = (p_plus - p_minus) / (2 * fd_step)

    sites = h0.box.site_tuples()
    kdist = {i: set_dist(sites[i], [as_site(site_k)]) for i in range(h0.n)}
    cdist = [min(kdist[h0.box.index(n)] for n in c) for c in partition.clusters]
    bound = np.empty_like(dp)
    for a in range(h0.n):
        ra = partition.cluster_of(sites[a])
        for b in range(h0.n):
            rb = partition.cluster_of(sites[b])
            bound[a, b] = abs(fprime_t0) / delta * partition.eta ** (-(cdist[ra] + cdist[rb]))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.abs(dp) / bound
    fitted = float(np.nanmax(ratios)) if abs(fprime_t0) > 0 else 0.0
    return dp, bound, fitted


# ---------------------------------------------------------------------------
# discrete unique continuation

@dataclasses.dataclass
class ReachabilityResult:
    reachable: dict        # site -> step count
    max_steps: int
    certified: bool        # DUCP: every point of A reached


def _punctured_ball(n, d):
    ball = {n}
    for axis in range(d):
        for sgn in (1, -1):
            ball.add(tuple(c + (sgn if i == axis else 0) for i, c in enumerate(n)))
    return ball


def ducp_reach(a_set, b_set):
    """Fixed point of the direct-reachability recursion.

    A site m of A becomes reachable once some neighbor n in A u B has its
    full punctured l1-ball {m': |n - m'| <= 1, m' != m} inside A u B with
    every point already reached: the eigenvalue equation at n then yields
    psi(m).
    """
    a_set = {as_site(n) for n in a_set}
    b_set = {as_site(n) for n in b_set}
    d = len(next(iter(a_set | b_set)))
    union = a_set | b_set
    steps = {n: 0 for n in b_set}
    k = 0
    while True:
        k += 1
        reached = steps.keys()
        new = []
        for m in sorted(a_set - reached):
            for n in sorted(union):
                if l1_dist(m, n) != 1:
                    continue
                if (_punctured_ball(n, d) - {m}) <= reached:
                    new.append(m)
                    break
        if not new:
            break
        for m in new:
            steps[m] = k
    reached_a = a_set & steps.keys()
    return ReachabilityResult(steps, max(steps.values(), default=0),
                              certified=(reached_a == a_set))


def unique_continuation_lower_bound(h, psi, energy, reach, w_bound):
    """Guaranteed mass of an eigenvector on the continuation layer B.

    bound = |A u B|^-1 (2^d eps + |E| + W)^-N eps^N  (eps = 1 gives the
    plain Laplacian form). Requires certified reach, ||psi|| >= 1 on
    A u B, and |V| <= W there except at most one huge entry (the
    second-largest convention). The comparison observed >= bound is a
    theorem; its failure raises.
    """
    if not reach.certified:
        raise ValueError("reachability is not certified; the bound does not apply")
    union = sorted(reach.reachable.keys())
    b_sites = [n for n, k in reach.reachable.items() if k == 0]
    idx = [h.box.index(n) for n in union]
    norm = float(np.linalg.norm(psi[idx]))
    if norm < 1.0 - 1e-12:
        raise NormTooSmall(f"||psi|| = {norm:.6f} < 1 on A u B")
    v = np.abs(h.diagonal[idx])
    if int(np.sum(v > w_bound + 1e-12)) > 1:
        raise ValueError("more than one diagonal entry above W on A u B")

    d = h.box.d
    n_steps = reach.max_steps
    eps = h.eps
    bound = (1.0 / len(union)) * (2**d * eps + abs(energy) + w_bound) ** (-n_steps) * eps**n_steps
    b_idx = [h.box.index(n) for n in b_sites]
    observed = float(np.max(np.abs(psi[b_idx])))
    best = b_sites[int(np.argmax(np.abs(psi[b_idx])))]
    if observed < bound:
        raise AssertionError(
            f"unique continuation violated: observed {observed:.3e} < bound {bound:.3e}")
    return best, bound, observed
