"""Exception hierarchy.

Two top-level branches map onto the CLI exit codes: ``InputError`` for
anything the caller got wrong (exit code 2) and ``NumericalError`` for
failures of the computation itself (exit code 3).
"""


class SibgxeError(Exception):
    """Base class for all package errors."""


class InputError(SibgxeError):
    """Invalid user input: configuration, schemas, domains, dimensions."""


class NumericalError(SibgxeError):
    """Numerical or statistical failure during computation."""


# -- input-side errors -------------------------------------------------------

class ConfigError(InputError):
    """Pipeline configuration is malformed or internally inconsistent."""


class SchemaError(InputError):
    """A table or design is missing required columns or has a bad header."""


class IngestionError(InputError):
    """Row-level validation failures while ingesting an external file."""


class DomainError(InputError):
    """A scalar argument lies outside its valid domain."""


class DimensionError(InputError):
    """Array shapes or lengths do not line up."""


class AlignmentError(InputError):
    """SNP identifier sets do not match between genotypes and weights."""


class SampleSizeError(InputError):
    """Too few observations for the requested operation."""


class MappingError(InputError):
    """Unknown category passed to a categorical mapping."""


class NestingError(InputError):
    """Two fits are not nested, so incremental fit statistics are undefined."""


class IdentificationError(InputError):
    """Order condition violated: fewer instruments than endogenous regressors."""


class BinningError(InputError):
    """Requested binning cannot be formed (e.g. empty quantile bins)."""


class StandardizationError(InputError):
    """Score vectors are not standardized against a common reference."""


# -- numerical-side errors ---------------------------------------------------

class CollinearityError(NumericalError):
    """Design matrix is rank deficient."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class ConvergenceError(NumericalError):
    """An iterative routine failed to converge within its iteration cap."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateDgpError(NumericalError):
    """A data-generating configuration produces a degenerate quantity."""


class DegenerateScoreError(NumericalError):
    """Score vector has zero variance and cannot be standardized."""


class ClusteringError(NumericalError):
    """Cluster structure is unusable (e.g. fewer than two clusters)."""


class EmptySampleError(NumericalError):
    """All rows were dropped (e.g. every fixed-effect group is a singleton)."""


class DiagnosticError(NumericalError):
    """An instrument diagnostic could not be computed."""
