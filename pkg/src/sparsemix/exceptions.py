"""Exceptions shared across the package."""


class SparsemixError(Exception):
    pass


class NotPositiveDefiniteError(SparsemixError):
    """A matrix required to be positive definite failed its factorization."""


class DegenerateComponentError(SparsemixError):
    """A mixture component collapsed (too few effective observations)."""
