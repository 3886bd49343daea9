"""Exception hierarchy shared by all hsdc modules."""


class HsdcError(Exception):
    """Base class for all library errors."""


class StructureError(HsdcError, ValueError):
    """Input violates a structural precondition (shape, symmetry, partition)."""


class IndefiniteMatrix(HsdcError):
    """A Cholesky factorization hit a non-positive pivot.

    ``path`` is the sequence of child indices (0 = upper-left, 1 = lower-right)
    from the root of the HODLR tree down to the failing dense leaf.
    """

    def __init__(self, message, path=(), level=None):
        super().__init__(message)
        self.path = tuple(path)
        self.level = len(self.path) if level is None else level


class SingularTriangular(HsdcError):
    """A triangular factor has a zero diagonal entry."""


class NotPSD(HsdcError):
    """Pivoted Cholesky found a diagonal update below the PSD tolerance."""


class GapTooSmall(HsdcError):
    """The spectral gap at the shift is too small for the sign iteration.

    Raised when the Cholesky factorization inside the Halley iteration breaks
    down, when the converged polar factor shows an eigenvalue within the
    resolution threshold of the shift, or when the computed projector fails
    its trace sanity check.
    """

    def __init__(self, message, iteration=None, shift=None, node=None):
        super().__init__(message)
        self.iteration = iteration
        self.shift = shift
        self.node = node


class ShiftTooCloseToEigenvalue(GapTooSmall):
    """Inverse iteration could not factor the squared shifted matrix."""


class NoConvergence(HsdcError):
    """The sign iteration exceeded its iteration cap."""


class CompletionDeficient(HsdcError):
    """Randomized range completion produced too few independent columns."""


class DegenerateSplit(HsdcError):
    """The shift put the whole spectrum on one side (nu == 0 or nu == n)."""

    def __init__(self, message, nu=None, shift=None):
        super().__init__(message)
        self.nu = nu
        self.shift = shift


class DepthExceeded(HsdcError):
    """Recursion depth of the divide-and-conquer driver exceeded its cap."""
