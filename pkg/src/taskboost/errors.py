"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError and
ModelError -> 3.
"""


class ConfigError(ValueError):
    """Invalid configuration (bad hyperparameter, bad flag combination)."""


class DataError(ValueError):
    """Malformed or inconsistent input data (parse errors, bad labels)."""


class ModelError(ValueError):
    """Model file missing, corrupt, or incompatible with the data schema."""


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""
