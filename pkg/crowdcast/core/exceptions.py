"""
Module defining exception classes.
"""


class CrowdcastError(Exception):
    """Base class for all errors raised by crowdcast."""
    pass


class ShapeError(CrowdcastError, ValueError):
    """Array shapes are incompatible with the requested operation."""
    pass


class TapeError(CrowdcastError, RuntimeError):
    """Tensors recorded on different gradient tapes were combined."""
    pass


class RankError(CrowdcastError, ValueError):
    """A scalar was required but a higher-rank tensor was supplied."""
    pass


class NumericsError(CrowdcastError, ArithmeticError):
    """A computation produced or received non-finite values."""
    pass


class ParseError(CrowdcastError, ValueError):
    """A text record could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = "line {}: {}".format(line, message)
        super(ParseError, self).__init__(message)


class DuplicateError(CrowdcastError, ValueError):
    """The same (frame, track) pair occurs twice."""
    pass


class MissingPoseError(CrowdcastError, KeyError):
    """No ego pose is available for a frame."""

    def __init__(self, frame_id):
        self.frame_id = frame_id
        super(MissingPoseError, self).__init__(
            "no ego pose for frame {}".format(frame_id))

    def __str__(self):
        return self.args[0]


class DomainError(CrowdcastError, ValueError):
    """A value lies outside the domain of a function."""
    pass


class InputError(CrowdcastError, ValueError):
    """Input collection is empty or otherwise unusable."""
    pass


class ConfigError(CrowdcastError, ValueError):
    """Invalid configuration value or incompatible configurations."""
    pass


# errors caused by what the user supplied rather than by a bug
USER_ERRORS = (ParseError, DuplicateError, MissingPoseError, DomainError,
               InputError, ConfigError, FileNotFoundError)
