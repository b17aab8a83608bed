"""Semantic exceptions shared across the package."""


class CmzlabError(Exception):
    """Base class for all package errors."""


class DomainError(CmzlabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DivergenceError(CmzlabError):
    """A sum or integral that the operation needs is infinite (index <= 1)."""


class InsufficientDataError(CmzlabError):
    """Not enough samples / lags / blocks to produce the requested estimate."""


class InsufficientRangeError(CmzlabError):
    """The requested window is too small for the check to be meaningful."""


class ConstructionError(CmzlabError):
    """A synthetic model or billiard table cannot be built from the parameters."""


class ContractViolationError(CmzlabError):
    """An input violates a declared contract (e.g. a non-centered observable)."""


class ConfigError(CmzlabError):
    """An experiment configuration is malformed; the message names the field."""
