"""Exception hierarchy shared by every stage of the pipeline.

Each class carries an ``error_class`` string and an ``exit_code`` so the CLI
can report failures in a machine-readable way.
"""

from __future__ import annotations


class LikeHarvestError(Exception):
    error_class = "error"
    exit_code = 1


class ConfigError(LikeHarvestError, ValueError):
    error_class = "config_error"
    exit_code = 2

    def __init__(self, message: str, keys: list[str] | None = None):
        super().__init__(message)
        self.keys = list(keys or [])


class NotFoundError(LikeHarvestError, KeyError):
    error_class = "not_found"
    exit_code = 4

    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else "not found"


class ClientError(LikeHarvestError, ValueError):
    """Malformed request (bad query, bad pagination token, bad auth)."""

    error_class = "client_error"
    exit_code = 4


class AuthError(ClientError):
    error_class = "auth_error"


class ResumableError(LikeHarvestError):
    """The run stopped but its persisted state can be resumed."""

    error_class = "resumable_error"
    exit_code = 3


class RateLimitError(ResumableError):
    error_class = "rate_limited"

    def __init__(self, reset_epoch_seconds: int, message: str | None = None):
        super().__init__(message or f"rate limited until {reset_epoch_seconds}")
        self.reset_epoch_seconds = int(reset_epoch_seconds)


class QuotaError(RateLimitError):
    """Monthly tweet cap exhausted."""

    error_class = "quota_exhausted"


class TransportError(ResumableError):
    """Server unreachable or the connection broke mid-request."""

    error_class = "transport_error"


class LoadError(LikeHarvestError):
    error_class = "load_error"
    exit_code = 4

    def __init__(self, message: str, path: str | None = None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class SchemaVersionError(LoadError):
    error_class = "schema_version_error"


class InputError(LikeHarvestError, ValueError):
    """Inputs that do not belong together (e.g. a dataset and a foreign timeline)."""

    error_class = "input_error"
    exit_code = 4


class EmptyMatrixError(LikeHarvestError, ValueError):
    error_class = "empty_matrix"
    exit_code = 4


class DenseCapError(LikeHarvestError, ValueError):
    error_class = "dense_cap_exceeded"
    exit_code = 4


class NumericalError(LikeHarvestError, ArithmeticError):
    error_class = "numerical_error"
    exit_code = 5

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual
