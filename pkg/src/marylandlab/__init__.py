"""Finite-volume laboratory for Maryland-type quasiperiodic operators with flat pieces."""

__version__ = "0.1.0"

from .boxes import LatticeBox
from .sampling import (
    SamplingFunction,
    certify_regularity,
    flat_piece_model,
    banded_flat_model,
    maryland_tangent,
    singular_set,
    staircase_model,
    verify_diophantine,
)
from .operators import FiniteOperator, build_h, coupling_graph, interpolated_block
from .perturbation import hellmann_feynman, isolated_branch, rs_series
from .blockdiag import (
    diagonalize_homotopy,
    ducp_reach,
    jacobi_separation,
    unique_continuation_lower_bound,
)
from .movingblock import assemble_u2, build_frame, build_u0, conjugate_and_extract, fit_mu
from .library import example_library, verify_theorem_hypotheses
from .analysis import compute_ids, decay_profile, ipr, spike_fit

__all__ = [
    "LatticeBox", "SamplingFunction", "certify_regularity", "flat_piece_model",
    "banded_flat_model", "maryland_tangent", "singular_set", "staircase_model",
    "verify_diophantine", "FiniteOperator", "build_h", "coupling_graph",
    "interpolated_block", "hellmann_feynman", "isolated_branch", "rs_series",
    "diagonalize_homotopy", "ducp_reach", "jacobi_separation",
    "unique_continuation_lower_bound", "assemble_u2", "build_frame", "build_u0",
    "conjugate_and_extract", "fit_mu", "example_library", "verify_theorem_hypotheses",
    "compute_ids", "decay_profile", "ipr", "spike_fit",
]
