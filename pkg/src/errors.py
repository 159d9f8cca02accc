"""
Error types shared by the library and the command-line surface.

Each error carries the process exit code ``main()`` uses when it escapes.
"""

from typing import Optional


class ExtremesError(Exception):
    """Base class for all library errors"""
    exit_code = 4


class ConfigError(ExtremesError):
    """Invalid or incomplete experiment configuration"""
    exit_code = 2

    def __init__(self, message: str, key: Optional[str] = None):
        self.message = message
        self.key = key
        if key:
            message = f"{key}: {message}"
        super().__init__(message)

    def __reduce__(self):
        return type(self), (self.message, self.key)


class ParameterError(ExtremesError, ValueError):
    """A numeric argument is outside its admissible range"""
    exit_code = 2


class DataError(ExtremesError, ValueError):
    """Input data is malformed (non-finite, wrong shape, unreadable)"""
    exit_code = 3


class DomainError(DataError):
    """Input lies outside the mathematical domain of an operation"""


class ReplicationError(ExtremesError):
    """A replication of an experiment failed"""
    exit_code = 4

    def __init__(self, index: int, seed: int, cause: BaseException):
        self.index = index
        self.seed = seed
        self.cause = cause
        super().__init__(f"replication {index} (seed {seed}) failed: {cause}")

    def __reduce__(self):
        # rebuilt from its fields when a worker process sends it back
        return type(self), (self.index, self.seed, self.cause)
