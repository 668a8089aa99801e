"""Error types shared across the package."""


class OlstecError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(OlstecError, ValueError):
    """A configuration value is out of its admissible range."""


class ShapeError(OlstecError, ValueError):
    """An array argument has an incompatible shape."""


class SingularGramError(OlstecError):
    """A normal-equation matrix could not be factorized.

    Raised by the per-step weight solve when the regularized Gram matrix
    is not positive definite. Recoverable: increase the regularizer.
    """


class FormatError(OlstecError, ValueError):
    """A binary or CSV input does not conform to the expected format."""
