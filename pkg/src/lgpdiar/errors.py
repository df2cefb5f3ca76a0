"""Exception hierarchy shared by every lgpdiar module."""


class LgpError(Exception):
    """Base class for all errors raised by lgpdiar."""


class ZeroVector(LgpError, ValueError):
    pass


class NotPositiveDefinite(LgpError, ValueError):
    pass


class DimensionMismatch(LgpError, ValueError):
    pass


class InvalidCount(LgpError, ValueError):
    pass


class InvalidCorrelation(LgpError, ValueError):
    pass


class EmptyInput(LgpError, ValueError):
    pass


class InactiveSpeaker(LgpError, ValueError):
    pass


class InvalidSad(LgpError, ValueError):
    pass


class EmptyCoarse(LgpError, ValueError):
    pass


class NoSpeech(LgpError, ValueError):
    pass


class EmptyWindow(LgpError, ValueError):
    pass


class EmptyReference(LgpError, ValueError):
    pass


class RecordingMismatch(LgpError, ValueError):
    pass


class ParseError(LgpError, ValueError):
    """Malformed input line. ``lineno`` is 1-based."""

    def __init__(self, message, path=None, lineno=None):
        self.path = path
        self.lineno = lineno
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)


class NegativeDuration(ParseError):
    pass


class InvertedInterval(ParseError):
    pass


class DimMismatch(ParseError):
    pass
