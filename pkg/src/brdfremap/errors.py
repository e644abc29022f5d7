"""Exception types shared across the package.

Each error carries a short machine-readable ``category`` used by the CLI
to report failures on stderr in a scriptable way.
"""


class BrdfRemapError(Exception):
    """Base class for all package errors."""

    category = "error"


class DomainError(BrdfRemapError, ValueError):
    """A numeric input lies outside its physical or declared domain."""

    category = "domain"


class ConfigurationError(BrdfRemapError, ValueError):
    """A scene / run configuration is degenerate or inconsistent."""

    category = "config"


class DimensionMismatchError(BrdfRemapError, ValueError):
    """Two images (or maps) that must agree in shape do not."""

    category = "dimension"


class DegenerateMatchError(BrdfRemapError, ValueError):
    """Irradiance matching against an all-zero reference."""

    category = "degenerate-match"


class SpecParseError(BrdfRemapError, ValueError):
    """Malformed BRDF spec text; ``line_no`` is 1-based."""

    category = "parse"

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class OptimizationError(BrdfRemapError, RuntimeError):
    """The least-squares engine could not start or a remap stage failed."""

    category = "optimization"


class InsufficientDataError(BrdfRemapError, ValueError):
    """A regression was asked to fit from too little (unflagged) data."""

    category = "insufficient-data"


class CompositionError(BrdfRemapError, ValueError):
    """Transforms whose model pairs do not line up cannot be chained."""

    category = "composition"
