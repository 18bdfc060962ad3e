"""Exception hierarchy.

Every error carries a stable ``code`` used as the diagnostic prefix by the CLI.
"""


class PBPError(Exception):
    code = "E_PBP"


class ParseError(PBPError, ValueError):
    code = "E_PARSE"

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ValidationError(PBPError, ValueError):
    code = "E_VALIDATION"


class EmptyMapError(PBPError, ValueError):
    code = "E_EMPTY_MAP"


class GeometryError(PBPError, ValueError):
    code = "E_GEOMETRY"


class InsufficientHistoryError(PBPError, ValueError):
    code = "E_HISTORY"


class EmptyCandidatesError(PBPError, ValueError):
    code = "E_NO_CANDIDATES"


class ShapeError(PBPError, ValueError):
    code = "E_SHAPE"


class UndefinedMetricError(PBPError, ValueError):
    code = "E_METRIC"


class ConfigError(PBPError, ValueError):
    code = "E_CONFIG"


class CheckpointVersionError(PBPError, ValueError):
    code = "E_CHECKPOINT_VERSION"


class NonFiniteLossError(PBPError, FloatingPointError):
    code = "E_NONFINITE"

    def __init__(self, message, head=None):
        super().__init__(message)
        self.head = head
