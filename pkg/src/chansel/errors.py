"""Exception and warning types raised across the package."""


class ChanselError(Exception):
    """Base class for all package errors."""


class ValidationError(ChanselError, ValueError):
    """Invalid configuration or argument."""


class ImageIOError(ChanselError, OSError):
    pass


class FormatError(ChanselError, ValueError):
    pass


class DegenerateImage(ChanselError, ValueError):
    pass


class PatchTooSmall(ChanselError, ValueError):
    pass


class DimensionMismatch(ChanselError, ValueError):
    pass


class NonFiniteFeature(ChanselError, ValueError):
    pass


class RankDeficient(ChanselError, ValueError):
    pass


class EmptySequence(ChanselError, ValueError):
    pass


class EmptyLexicon(ChanselError, ValueError):
    pass


class UnknownCharacter(ChanselError, KeyError):
    pass


class UnknownGlyph(ChanselError, KeyError):
    pass


class InsufficientData(ChanselError, ValueError):
    pass


class LevelOutOfRange(ChanselError, ValueError):
    pass


class LengthMismatch(ChanselError, ValueError):
    pass


class DegenerateClassWarning(UserWarning):
    """A one-vs-all class had a single label value; a constant classifier was used."""


class VarianceFloorHit(UserWarning):
    """Re-estimated variances were clipped to the floor."""
