"""Shared error types for training and data handling."""


class DataError(ValueError):
    """Input files or corpus contents violate a structural requirement."""


class TrainingDiverged(RuntimeError):
    """A training run produced non-finite values and was aborted."""
