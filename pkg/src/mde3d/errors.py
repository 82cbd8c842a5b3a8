"""Exception hierarchy shared by all modules.

Each class maps to one failure family; the CLI turns families into exit codes.
"""


class Mde3dError(Exception):
    """Base class for every error raised by this package."""


class InvalidDepthError(Mde3dError, ValueError):
    pass


class BehindCameraError(Mde3dError, ValueError):
    pass


class DegenerateGeometryError(Mde3dError, ValueError):
    pass


class ShapeError(Mde3dError, ValueError):
    pass


class EmptyEvaluationError(Mde3dError, ValueError):
    pass


class UndefinedRecallError(Mde3dError, ValueError):
    pass


class AlignmentError(Mde3dError, ValueError):
    pass


class MetricLookupError(Mde3dError, KeyError):
    pass


class FormatError(Mde3dError, ValueError):
    """Input is structurally not what the codec expects."""


class ParseError(FormatError):
    """A token or line could not be parsed."""


class TruncationError(FormatError):
    pass


class ValidationError(Mde3dError, ValueError):
    pass


class FocalMismatchWarning(UserWarning):
    """Horizontal and vertical focal lengths differ; only f_u is used."""


class IntrinsicsWarning(UserWarning):
    pass
