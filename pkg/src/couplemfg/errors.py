"""Exception types shared across the package.

ConfigError maps to CLI exit code 2, NumericsError (and subclasses) to
exit code 3.
"""

from __future__ import annotations

__all__ = ["ConfigError", "NumericsError", "BlowUpError"]


class ConfigError(ValueError):
    """Invalid configuration: unknown key, bad value, parse failure."""


class NumericsError(RuntimeError):
    """A solver detected an invalid numerical state."""


class BlowUpError(NumericsError):
    """State or value field left the representable range."""
