"""Rayleigh-Schrodinger series, isolated-branch bounds, eigenvalue derivatives.

The series anchors at a diagonal entry: E_0 = V_n, psi_0 = e_n, all
higher psi_j orthogonal to e_n. Matching powers of eps in
(V + eps Phi) psi = E psi gives, with those normalizations,

    E_k = (Phi psi_{k-1})(n),
    psi_k(m) = [sum_{j=1}^{k-1} E_j psi_{k-j}(m) - (Phi psi_{k-1})(m)] / (V_m - E_0)

for m != n (the paper states existence/uniqueness; this recursion is the
unique solution and is cross-checked against the eigensolver).
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .boxes import as_site
from .errors import BranchAmbiguity, DegenerateDiagonal, GapTooSmall

FD_REL_STEP = 1e-6


@dataclasses.dataclass
class SeriesCoefficients:
    base_site: tuple
    order: int
    energies: list        # E_0 .. E_K
    vectors: np.ndarray   # (K+1, N), row j = psi_j in box index order
    box: object

    def __post_init__(self):
        base = self.box.index(self.base_site)
        if abs(self.vectors[0, base] - 1.0) > 1e-12 or np.abs(self.vectors[0]).sum() > 1 + 1e-12:
            raise ValueError("psi_0 must be the base coordinate vector")
        for j in range(1, self.order + 1):
            if abs(self.vectors[j, base]) > 1e-12:
                raise ValueError(f"psi_{j} not orthogonal to psi_0")

    def vector_norms(self):
        return np.linalg.norm(self.vectors, axis=1)

    def energy_partial_sum(self, eps):
        return float(sum(e * eps**j for j, e in enumerate(self.energies)))

    def vector_partial_sum(self, eps, normalize=True):
        v = sum(eps**j * self.vectors[j] for j in range(self.order + 1))
        if normalize:
            v = v / np.linalg.norm(v)
        return v


def rs_series(h, n, order):
    """Series coefficients for the eigenpair of h = V + eps*Phi anchored at site n.

    Requires pairwise-distinct diagonal values; raises DegenerateDiagonal
    if any gap is below 1e-10 (the recursion divides by V_m - E_0).
    """
    v = h.diagonal
    gaps = np.abs(v[:, None] - v[None, :]) + np.eye(len(v))
    if gaps.min() < 1e-10:
        i, j = np.unravel_index(np.argmin(gaps), gaps.shape)
        raise DegenerateDiagonal(
            f"diagonal entries at {h.box.site(int(i))} and {h.box.site(int(j))} "
            f"differ by {gaps.min():.2e}")
    phi = h.hopping_matrix()
    base = h.box.index(n)
    e0 = float(v[base])
    denom = v - e0
    denom[base] = 1.0  # base component is pinned to zero, never divided

    energies = [e0]
    vectors = np.zeros((order + 1, len(v)))
    vectors[0, base] = 1.0
    for k in range(1, order + 1):
        phi_prev = phi @ vectors[k - 1]
        energies.append(float(phi_prev[base]))
        rhs = -phi_prev
        for j in range(1, k):
            rhs += energies[j] * vectors[k - j]
        psi_k = rhs / denom
        psi_k[base] = 0.0
        vectors[k] = psi_k
    return SeriesCoefficients(as_site(n), order, energies, vectors, h.box)


@dataclasses.dataclass
class ConvergenceReport:
    radii: list            # |E_{j+1}| / |E_j| per order
    delta: float
    bound_constant: float  # smallest C with |E_j| <= (C ||Phi|| / delta)^j
    divergent: bool = False
    growth: list = dataclasses.field(default_factory=list)  # parity-safe per-order factors


def convergence_report(coeffs, delta, phi_norm, eps=None):
    """Empirical growth diagnostics of the energy coefficients.

    Literal ratios |E_{j+1}|/|E_j| are reported (0 when both vanish, nan
    when only the denominator does). Divergence is judged on per-order
    geometric ratios between consecutive nonzero coefficients, which is
    parity-safe: pure off-diagonal hopping zeroes every odd order.
    """
    if coeffs.order < 3:
        raise ValueError("need at least order 3 to diagnose growth")
    e = np.abs(np.array(coeffs.energies))
    radii = []
    for j in range(len(e) - 1):
        if e[j] == 0.0:
            radii.append(0.0 if e[j + 1] == 0.0 else float("nan"))
        else:
            radii.append(float(e[j + 1] / e[j]))
    c = 0.0
    for j in range(1, len(e)):
        if e[j] > 0:
            c = max(c, float(e[j] ** (1.0 / j) * delta / phi_norm))
    nonzero = [(j, ej) for j, ej in enumerate(e) if j >= 1 and ej > 0]
    growth = [(e2 / e1) ** (1.0 / (j2 - j1))
              for (j1, e1), (j2, e2) in zip(nonzero, nonzero[1:])]
    divergent = bool(eps is not None and any(g > 1.0 / eps for g in growth))
    return ConvergenceReport(radii, delta, c, divergent, growth)


# ---------------------------------------------------------------------------
# isolated branches of finite-volume operators

@dataclasses.dataclass
class IsolatedBranch:
    energy: float
    vector: np.ndarray
    denergy: float
    dvector: np.ndarray
    target: float        # f(x0 + omega.n)
    dtarget: float       # f'(x0 + omega.n)
    delta: float         # diagonal isolation of the anchor entry
    energy_slack: float  # |E - f| against the eps bound (<= 1 means verified)
    vector_slack: float
    denergy_slack: float

    @property
    def verified(self):
        return max(self.energy_slack, self.vector_slack, self.denergy_slack) <= 1.0


def isolated_branch(h_family, n, x0, dtarget=None, fd_step=None,
                    phi_norm=1.0, dphi_norm=0.0):
    """Eigenpair of h_family(x0) anchored at the diagonal entry of site n,
    with Lipschitz data from central finite differences.

    The printed first-order bound on |E' - f'| would force equality for
    constant hopping; the verified form carries the second-order correction
    C eps^2 delta^-2 N ||phi||^2 max|f'| from the |psi(m)|^2 weights.
    """
    h = h_family(x0)
    base = h.box.index(n)
    v = h.diagonal
    target = float(v[base])
    others = np.delete(v, base)
    delta = float(np.abs(others - target).min())
    if delta <= 0:
        raise DegenerateDiagonal("anchor entry is not isolated on the diagonal")

    evals, evecs = h.eigh()
    order = np.argsort(np.abs(evals - target))
    if len(evals) > 1:
        d1 = abs(evals[order[1]] - target)
        if d1 <= 2.0 * h.eps * phi_norm:
            raise BranchAmbiguity(
                f"two eigenvalues within 2 eps ||phi|| of the anchor at site {n}")
    k = order[0]
    energy = float(evals[k])
    vec = evecs[:, k].copy()
    if vec[base] < 0:
        vec = -vec

    step = fd_step if fd_step is not None else FD_REL_STEP * max(1.0, abs(x0))
    hp, hm = h_family(x0 + step), h_family(x0 - step)
    a_dot = (hp.matrix() - hm.matrix()) / (2 * step)
    denergy = float(vec @ a_dot @ vec)

    def aligned_branch(op):
        w, q = op.eigh()
        kk = int(np.argmin(np.abs(w - energy)))
        u = q[:, kk]
        return u if u @ vec >= 0 else -u

    dvector = (aligned_branch(hp) - aligned_branch(hm)) / (2 * step)

    eb = h.eps * phi_norm / delta
    nsites = h.n
    if dtarget is None:
        dtarget = float(a_dot[base, base])
    d2 = h.eps * dphi_norm / delta + \
        8.0 * nsites * (h.eps * phi_norm / delta) ** 2 * np.abs(a_dot.diagonal()).max()
    return IsolatedBranch(
        energy=energy, vector=vec, denergy=denergy, dvector=dvector,
        target=target, dtarget=float(dtarget), delta=delta,
        energy_slack=abs(energy - target) / eb if eb > 0 else 0.0,
        vector_slack=float(np.linalg.norm(vec - _basis(h.n, base))) / eb if eb > 0 else 0.0,
        denergy_slack=abs(denergy - dtarget) / d2 if d2 > 0 else 0.0,
    )


def _basis(n, k):
    e = np.zeros(n)
    e[k] = 1.0
    return e


# ---------------------------------------------------------------------------
# Hellmann-Feynman

def hellmann_feynman(a_family, t0, branch, gap_floor=1e-8, fd_step=None, rank_one=None):
    """Variational eigenvalue derivative <A'(t0) psi, psi> for an isolated branch.

    branch: index into the sorted spectrum of A(t0).
    rank_one = (k, fval, fprime): for A(t) = A_0 + f(t) <e_k, .> e_k the
    derivative is exactly fprime * |psi_k|^2, no differencing of A needed.
    """
    a0 = np.asarray(a_family(t0), dtype=float)
    evals, evecs = np.linalg.eigh(a0)
    k = int(branch)
    gaps = [abs(evals[k] - evals[j]) for j in range(len(evals)) if j != k]
    if gaps and min(gaps) < gap_floor:
        raise GapTooSmall(f"gap {min(gaps):.2e} at branch {k} below {gap_floor:.1e}")
    psi = evecs[:, k]
    if rank_one is not None:
        site, _fval, fprime = rank_one
        return float(fprime * psi[site] ** 2)
    step = fd_step if fd_step is not None else FD_REL_STEP * max(1.0, abs(t0))
    a_dot = (np.asarray(a_family(t0 + step), dtype=float)
             - np.asarray(a_family(t0 - step), dtype=float)) / (2 * step)
    return float(psi @ a_dot @ psi)
