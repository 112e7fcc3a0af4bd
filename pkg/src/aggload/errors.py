"""Exception types with stable machine-readable codes."""

from __future__ import annotations


class AggloadError(Exception):
    """Base class for all library errors."""

    code = "error"


class SchemaError(AggloadError, ValueError):
    """Malformed or inconsistent input data (CSV schema, missing cells, ...)."""

    code = "schema"


class DomainError(AggloadError, ValueError):
    """Evaluation requested outside a basis or curve domain."""

    code = "domain"


class IdentifiabilityError(AggloadError, ValueError):
    """Model cannot be identified from the given market/design."""

    code = "identifiability"


class FactorizationError(AggloadError, RuntimeError):
    """Covariance matrix could not be factorized, even after jitter."""

    code = "factorization"

    def __init__(self, message: str, condition_number: float | None = None):
        super().__init__(message)
        self.condition_number = condition_number


class DegenerateClusterError(AggloadError, RuntimeError):
    """A mixture cluster lost essentially all responsibility."""

    code = "degenerate-cluster"

    def __init__(self, message: str, cluster: int | None = None):
        super().__init__(message)
        self.cluster = cluster
