"""Exception types shared across the package."""


class ShapselError(Exception):
    """Base class for all errors raised by this package."""


class ModelFormatError(ShapselError):
    """Model document violates the JSON schema or a structural invariant.

    Messages carry the offending tree id and node id where applicable.
    """


class DataError(ShapselError):
    """Dataset is malformed: bad CSV, duplicate columns, NaN target, ..."""


class StatsError(ShapselError):
    """Statistical precondition failed: degenerate target, too few rows,
    single-class labels, metric/objective mismatch."""
