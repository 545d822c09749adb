"""Exception hierarchy shared across the package.

The CLI maps each category to a distinct exit code, so raise the most
specific class available.
"""


class QRobustError(Exception):
    """Base class for all package errors."""

    category = "error"


class ConfigError(QRobustError):
    """Bad or inconsistent experiment configuration."""

    category = "config"


class ValidationError(QRobustError):
    """Invalid domain object or operation argument."""

    category = "validation"


class IntegrationError(QRobustError):
    """Propagation failed an accuracy or unitarity check."""

    category = "numerical"


class DecodingError(QRobustError):
    """Pathway decoding failed (aliasing, collisions, degenerate setup)."""

    category = "numerical"
