"""Exception taxonomy shared by every module.

Three families, matching the command-line exit codes: validation problems
(bad arguments, malformed values, empty inputs), dataset/file problems, and
numerical failures (degenerate geometry, underdetermined fits).
"""


class RangefaceError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(RangefaceError):
    """An argument or value violates a documented precondition."""


class EmptyInputError(ValidationError):
    """An operation received an input with no usable content."""


class DatasetError(RangefaceError):
    """A file or directory could not be read, written, or parsed."""


class PointCloudParseError(DatasetError):
    """A point-cloud text file is malformed.  Carries the offending line."""

    def __init__(self, path, line_number, message):
        self.path = str(path)
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")


class NumericalError(RangefaceError):
    """A numerical routine cannot produce a meaningful result."""


class DegenerateGeometryError(NumericalError):
    """Point configuration does not constrain a rigid transform."""


class UnderdeterminedFitError(NumericalError):
    """Fewer observations than unknowns in a least-squares fit."""


class RankDeficiencyError(NumericalError):
    """A restricted linear system lost rank.  Carries the deficiency index."""

    def __init__(self, deficiency, message=None):
        self.deficiency = int(deficiency)
        super().__init__(message or f"system is rank-deficient by {deficiency}")
