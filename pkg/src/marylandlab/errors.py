"""Exception types shared across the package."""


class MarylandError(Exception):
    """Base class for all package errors."""


class PoleProximity(MarylandError):
    """Evaluation point is within the guard distance of 1/2 + Z.

    Carries the offending phase and, when raised while building an
    operator, the lattice site whose phase hit the pole.
    """

    def __init__(self, x, site=None):
        self.x = x
        self.site = site
        msg = f"phase {x!r} is within 1e-12 of 1/2 + Z"
        if site is not None:
            msg += f" (site {site})"
        super().__init__(msg)


class NearRational(MarylandError):
    """A scanned integer vector brought n·omega within 1e-12 of Z."""

    def __init__(self, n, value):
        self.n = n
        self.value = value
        super().__init__(f"||n.omega|| = {value:.3e} < 1e-12 at n = {n}")


class DegenerateDiagonal(MarylandError):
    """Two diagonal entries closer than 1e-10; the series recursion divides by their gap."""


class BranchAmbiguity(MarylandError):
    """Two eigenvalues compete for the same diagonal anchor."""


class GapTooSmall(MarylandError):
    """Spectral gap below the floor required for a derivative formula."""


class GapCollapse(MarylandError):
    """Adjacent eigenvalues collided along a homotopy path."""

    def __init__(self, x, t, gap):
        self.x = x
        self.t = t
        self.gap = gap
        super().__init__(f"eigenvalue gap {gap:.3e} collapsed at x={x!r}, t={t!r}")


class SignFlip(MarylandError):
    """Column matching along the homotopy dropped below the overlap floor."""


class HypothesisViolation(MarylandError):
    """An input matrix or partition fails the stated structural hypothesis."""


class AssignmentAmbiguity(MarylandError):
    """An eigenvector has less than half its mass in every cluster."""


class NormTooSmall(MarylandError):
    """Eigenvector norm on A∪B below 1; the continuation bound does not apply."""


class FrameMismatch(MarylandError):
    """Block frame sets are inconsistent with the R-, R0, R+ decomposition."""


class Gen2Violation(MarylandError):
    """A ring site of the frame fails regularity somewhere on the x-interval."""

    def __init__(self, x, site, certificate=None):
        self.x = x
        self.site = site
        self.certificate = certificate
        super().__init__(f"(gen2) fails at x={x!r}, site {site}")


class Gen3Violation(MarylandError):
    """Gap hypothesis of the homotopy theorem fails for a block family."""


class Gen4Violation(MarylandError):
    """Two copies of the moving block overlap."""

    def __init__(self, support_a, support_b):
        self.support_a = support_a
        self.support_b = support_b
        super().__init__(f"copy supports overlap: {support_a} and {support_b}")


class SeparationViolation(MarylandError):
    """Block eigenvalues fail the c_sep·eps separation requirement."""


class CovarianceMismatch(MarylandError):
    """Covariantly related diagonal entries disagree beyond tolerance."""


class PeakNotFound(MarylandError):
    """No density-of-states peak above twice the background near the target energy."""


class ManifestError(MarylandError):
    """Experiment manifest failed to parse or validate."""
