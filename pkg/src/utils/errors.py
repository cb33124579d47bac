"""
Exception hierarchy for the FTP lab.
Every error carries an exit-code category used by the CLI.
"""


class FTPLabError(Exception):
    """Base exception for lab errors"""
    exit_code = 1
    category = "error"


class ConfigurationError(FTPLabError):
    """Invalid configuration, architecture or argument"""
    exit_code = 2
    category = "config"


class DataFormatError(FTPLabError):
    """Base exception for dataset parsing errors"""
    exit_code = 3
    category = "data"


class BadMagicError(DataFormatError):
    pass


class TruncatedFileError(DataFormatError):
    pass


class CountMismatchError(DataFormatError):
    pass


class RecordSizeError(DataFormatError):
    pass


class SeriesFormatError(DataFormatError):
    pass


class NumericalError(FTPLabError):
    """Base exception for numerical contract violations"""
    exit_code = 4
    category = "numeric"


class DimensionError(NumericalError):
    pass


class RankError(NumericalError):
    pass


class UndefinedAngleError(NumericalError):
    pass


class UndefinedMetricError(NumericalError):
    pass


class NonFiniteError(NumericalError):
    pass


class DegenerateInputError(NumericalError):
    pass


class PreconditionError(NumericalError):
    pass


class InternalConsistencyError(FTPLabError):
    """Raised when cached traces and targets disagree"""
    exit_code = 5
    category = "internal"
