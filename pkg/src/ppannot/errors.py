"""Exception types shared across the package.

Every error carries an ``exit_code`` so the CLI can map failures to distinct
process exit statuses.
"""


class PPAnnotError(Exception):
    exit_code = 1


class UnknownToken(PPAnnotError):
    exit_code = 10


class GrammarViolation(PPAnnotError):
    exit_code = 11


class DuplicateToken(PPAnnotError):
    exit_code = 12


class MissingEOS(PPAnnotError):
    exit_code = 13


class UnknownId(PPAnnotError):
    exit_code = 14


class EmptySequenceError(PPAnnotError):
    exit_code = 15


class EmptyReference(PPAnnotError):
    exit_code = 20


class LengthMismatch(PPAnnotError):
    exit_code = 21


class RaggedInputs(PPAnnotError):
    exit_code = 22


class InvalidConfig(PPAnnotError):
    exit_code = 30


class SequenceTooLong(PPAnnotError):
    exit_code = 31


class EmptyDataset(PPAnnotError):
    exit_code = 32


class CheckpointFormatError(PPAnnotError):
    exit_code = 33


class InvalidRate(PPAnnotError):
    exit_code = 40


class InsufficientData(PPAnnotError):
    exit_code = 41


class DimMismatch(PPAnnotError):
    exit_code = 42
