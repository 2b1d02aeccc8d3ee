"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
SolverError -> 3, I/O problems (plain OSError) -> 4.
"""


class BcecapError(Exception):
    """Base class for package errors."""


class ConfigError(BcecapError):
    """Invalid configuration, constellation, or argument."""


class SolverError(BcecapError):
    """Numerical solver failed to converge or detected an inconsistency."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
