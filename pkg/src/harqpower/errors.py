"""Exception types raised across the package."""


class HarqError(Exception):
    """Base class for all package errors."""


class DomainError(HarqError, ValueError):
    """An argument lies outside the domain of the requested function."""


class DegeneratePolicyError(HarqError, ValueError):
    """A power policy carries no usable power (nothing can ever be decoded)."""


class UnsupportedConfigurationError(HarqError, ValueError):
    """The combination of protocol, schedule and fading model is not supported."""


class ConfigError(HarqError, ValueError):
    """Optimizer or experiment configuration is inconsistent."""


class InfeasibleError(HarqError):
    """No candidate satisfies the outage constraint."""


class NumericError(HarqError, ArithmeticError):
    """A numerical procedure (bracketing, shooting) failed to converge."""
