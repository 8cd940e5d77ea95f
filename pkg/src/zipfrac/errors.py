"""Exception types shared across the package.

Each error carries an ``exit_code`` used by the command-line front end and,
where relevant, the config key that caused it.
"""

from __future__ import annotations


class ZipfracError(Exception):
    exit_code = 1

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class ConfigError(ZipfracError, ValueError):
    """Invalid construction input (partition, signature, scaling, config file)."""

    exit_code = 2


class DomainError(ZipfracError, ValueError):
    """A query point lies outside the domain or the requested cell."""

    exit_code = 2


class BudgetError(ZipfracError):
    """Refinement level would exceed the memory budget."""

    exit_code = 3

    def __init__(self, message: str, count: int, budget: int, key: str | None = "level"):
        super().__init__(message, key)
        self.count = count
        self.budget = budget


class MatchingError(ZipfracError):
    """Redundant boundary computations disagree during surface construction."""

    exit_code = 2


class EmptyIntersectionError(ZipfracError):
    """No scaling value satisfies every per-cell interval."""

    exit_code = 4

    def __init__(self, message: str, blocking: list | None = None, key: str | None = "shape"):
        super().__init__(message, key)
        self.blocking = blocking or []


class UnsupportedError(ZipfracError):
    """Input outside the setting an operation is defined for."""

    exit_code = 5


class ResolutionError(ZipfracError):
    """Surface too coarse for the requested box-counting scale."""

    exit_code = 5
