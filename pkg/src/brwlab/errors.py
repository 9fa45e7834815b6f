"""Exception types shared across the package.

The CLI maps each family onto a fixed exit code, so library code raises
the most specific class that applies.
"""


class BrwlabError(Exception):
    """Base class for all package errors."""


class ConfigError(BrwlabError, ValueError):
    """Invalid model parameters or configuration (CLI exit code 2)."""


class DomainError(ConfigError):
    """Argument outside the domain where a function is defined."""


class RegimeError(ConfigError):
    """Operation requested for the wrong Schroeder/Boettcher regime."""


class SimulationAbort(BrwlabError, RuntimeError):
    """Monte Carlo run cannot produce the requested sample (exit code 3)."""


class ResourceError(BrwlabError, RuntimeError):
    """Population cap or memory bound exceeded (exit code 4)."""
