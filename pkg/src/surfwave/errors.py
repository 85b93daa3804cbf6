"""Exception hierarchy shared across the toolkit.

Two families matter for the CLI exit codes: ``DataError`` (bad inputs,
malformed files, contract violations -> exit 2) and ``NumericalError``
(solver failures -> exit 3). Usage errors are raised as ``UsageError``
by the argument layer (-> exit 1).
"""


class SurfwaveError(Exception):
    """Base class for all toolkit errors."""


class UsageError(SurfwaveError):
    """Bad command-line invocation."""


class DataError(SurfwaveError):
    """Invalid or inconsistent input data."""


class FormatError(DataError):
    """Malformed file: bad header, bad counts, index out of range."""


class DegenerateMeshError(DataError):
    """Mesh fails validation (zero-area triangles, isolated vertices...)."""


class DimensionError(DataError):
    """Array sizes do not match the operation's contract."""


class DomainError(DataError):
    """Parameter outside its valid domain."""


class MissingSurfaceError(DataError):
    """A required surface tag is absent from a per-subject collection."""


class MismatchError(DataError):
    """Objects that must agree (vocabulary size, normalization) differ."""


class DegenerateDataError(DataError):
    """Training data cannot support the requested operation."""


class ManifestError(DataError):
    """Malformed cohort manifest."""


class NumericalError(SurfwaveError):
    """Base class for solver failures."""


class ConvergenceError(NumericalError):
    """Iterative solver did not converge.

    Carries the iteration budget and the best residual seen, when the
    backend exposes them.
    """

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class RankError(NumericalError):
    """Input matrix is rank-deficient in a way the method cannot absorb."""
