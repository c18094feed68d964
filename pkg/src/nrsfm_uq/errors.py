"""Exception hierarchy shared by all modules.

Every error raised on purpose by this package derives from NrsfmUqError so
callers (and the CLI) can map failures to distinct exit codes.
"""


class NrsfmUqError(Exception):
    """Base class for all package errors."""


class DimensionError(NrsfmUqError):
    """Matrix shapes are inconsistent with each other or with a declared size."""


class SpecError(NrsfmUqError):
    """A parameter or constructed value violates a documented precondition."""


class NumericalError(NrsfmUqError):
    """A numerical routine failed or produced non-finite values."""


class DegenerateAlignmentError(NrsfmUqError):
    """The cross matrix of a factor alignment is (numerically) zero."""


class DegenerateSampleError(NrsfmUqError):
    """A statistical test received a zero-variance sample."""


class TrialError(NrsfmUqError):
    """A Monte Carlo trial failed; carries the offending trial index."""

    def __init__(self, trial_index, cause):
        super().__init__(f"trial {trial_index} failed: {cause}")
        self.trial_index = trial_index
        self.cause = cause


class CoverageError(NrsfmUqError):
    """Segment results leave a gap in the frame range to be fused."""


class ParseError(NrsfmUqError):
    """A matrix CSV file could not be parsed; carries the 1-based line number."""

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ManifestError(NrsfmUqError):
    """A manifest disagrees with the matrix file it accompanies."""


class IoError(NrsfmUqError):
    """An output path could not be written or an input path read."""


# Distinct CLI exit code per error class; 1 is reserved for unexpected errors.
EXIT_CODES = {
    ParseError: 2,
    ManifestError: 3,
    DimensionError: 4,
    SpecError: 5,
    NumericalError: 6,
    DegenerateAlignmentError: 7,
    DegenerateSampleError: 8,
    TrialError: 9,
    CoverageError: 10,
    IoError: 11,
}


def exit_code_for(exc: BaseException) -> int:
    for cls, code in EXIT_CODES.items():
        if isinstance(exc, cls):
            return code
    return 1
