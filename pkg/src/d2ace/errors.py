"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class ConfigError(ValueError):
    """A configuration value is out of its documented range."""


class DataError(ValueError):
    """A data file is malformed or violates the format contract."""


class ContractError(ValueError):
    """An internal precondition was violated (bad weights, asymmetric input, ...)."""


class TrainingError(RuntimeError):
    """Training produced a non-finite gradient or diverged."""


class EvaluationError(ValueError):
    """A metric cannot be computed on the given labels (e.g. no usable label)."""
