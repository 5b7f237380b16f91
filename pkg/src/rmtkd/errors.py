"""Exception types shared across the package."""


class RmtkdError(Exception):
    """Base class for all package errors."""


class InvalidInput(RmtkdError):
    """An argument violates a documented precondition."""


class InvalidState(RmtkdError):
    """An operation was called before its prerequisites were established."""


class DegenerateSpectrum(RmtkdError):
    """All eigenvalues identical; the noise-variance fit is undefined."""


class NumericalFailure(RmtkdError):
    """An underlying numerical routine failed to converge."""


class NoSpikes(RmtkdError):
    """A spectrum has no eigenvalues above the bulk edge; nothing to retain."""


class AlreadyProjected(RmtkdError):
    """The target layer is already followed by a projection layer."""


class GenerationFailure(RmtkdError):
    """A synthetic-data generator could not satisfy its constraints."""


class ParseError(RmtkdError):
    """A data file contains a malformed cell."""


class SchemaError(RmtkdError):
    """A data file does not match the declared schema."""


class CorruptFile(RmtkdError):
    """A checkpoint file is truncated or has bad magic bytes."""


class VersionMismatch(RmtkdError):
    """A checkpoint file was written by an incompatible format version."""


class ConfigError(RmtkdError):
    """A run configuration failed validation."""
