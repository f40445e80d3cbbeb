"""Exception types shared across the package."""


class KsddpgError(Exception):
    """Base class for all package errors."""


class DimensionError(KsddpgError, ValueError):
    """Operand shapes do not line up."""


class UsageError(KsddpgError, RuntimeError):
    """An API was called out of its contract (stale cache, mid-transition call, ...)."""


class NumericError(KsddpgError, ArithmeticError):
    """A non-finite value reached an operation that refuses it."""


class ConfigError(KsddpgError, ValueError):
    """Invalid configuration value or unreachable routing."""


class SchemaError(KsddpgError, ValueError):
    """A structured input file does not parse against its schema.

    ``path`` names the offending location, e.g. ``links[3].lanes``.
    """

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ValidationError(KsddpgError, ValueError):
    """Parsed input is internally inconsistent (e.g. a phase naming an unknown movement)."""


class IllegalActionError(UsageError):
    """A signal action violates a timing constraint; ``constraint`` names it."""

    def __init__(self, constraint: str, message: str = ""):
        self.constraint = constraint
        super().__init__(message or f"illegal action: violates {constraint}")


class VersionError(KsddpgError, ValueError):
    """A checkpoint or file carries an unknown format version."""


def json_path(parts) -> str:
    """Render a JSON location as ``links[3].lanes``."""
    out = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in parts)
    return out.lstrip(".") or "<root>"
