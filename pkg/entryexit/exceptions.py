class EntryExitException(Exception):
    """Base Exception for EntryExit"""


class InvalidInputException(EntryExitException):
    """Raised for non-finite, mis-shaped or otherwise invalid numerical input"""


class RangeException(EntryExitException):
    """Raised when an input lies outside the range an algorithm can handle accurately"""


class StiffnessException(EntryExitException):
    """Raised when the adaptive integrator step size underflows"""


class DomainException(EntryExitException):
    """Raised when a vector field is evaluated outside its domain box"""


class UnsupportedKindException(EntryExitException):
    """Raised for a manifold kind or balance method an operation doesn't support"""


class DegradedQualityException(EntryExitException):
    """Raised when too many eigenvalue samples failed to converge along a series"""


class NoSignalException(EntryExitException):
    """Raised when no sample falls inside the region gate"""


class ParseException(EntryExitException):
    """Raised for a malformed row in an input file"""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class NoDataException(EntryExitException):
    """Raised for an input file without any data row"""


class PreconditionException(EntryExitException):
    """Raised when the hypothesis of an expansion or refinement doesn't hold"""


class ConfigException(EntryExitException):
    """Raised for configuration errors"""
