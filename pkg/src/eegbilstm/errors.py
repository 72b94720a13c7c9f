"""Exception types raised across the pipeline.

Every error carries an ``exit_code`` used by the command-line tool, grouped
by error class (input format, data contract, numeric contract, config).
"""


class EEGError(Exception):
    exit_code = 1


# -- on-disk formats -------------------------------------------------------

class FormatError(EEGError, ValueError):
    exit_code = 3


class BadMagic(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class ChannelMismatch(FormatError):
    pass


# -- data contracts --------------------------------------------------------

class DataError(EEGError, ValueError):
    exit_code = 4


class UnknownChannel(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class MissingLabel(DataError):
    pass


class EmptyDataset(DataError):
    pass


class SpanTooShort(DataError):
    pass


class ZeroHop(DataError):
    pass


class TooFewTrials(DataError):
    pass


class ClassTooSmall(DataError):
    pass


class BadBand(DataError):
    pass


# -- numeric / shape contracts ---------------------------------------------

class NumericError(EEGError, ValueError):
    exit_code = 5


class NegativeEnergy(NumericError):
    pass


class ShapeMismatch(NumericError):
    pass


class KindMismatch(NumericError):
    pass


class LengthMismatch(NumericError):
    pass


class IndexOutOfRange(NumericError, IndexError):
    pass


class EmptyMatrix(NumericError):
    pass


# -- experiment configuration ----------------------------------------------

class ConfigError(EEGError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    exit_code = 2

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class ExperimentLocked(EEGError):
    exit_code = 6
