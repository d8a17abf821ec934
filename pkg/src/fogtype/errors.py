"""Exception hierarchy shared across the package."""


class FogtypeError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(FogtypeError):
    """A file header does not match the expected schema."""


class ParseError(FogtypeError):
    """A file row could not be parsed (non-numeric cell, ragged row, ...)."""


class IntegrityError(FogtypeError):
    """Cross-record consistency violation (duplicate keys, missing links,
    fingerprint mismatches)."""


class ValidationError(FogtypeError):
    """An argument or configuration value violates a documented contract."""


class ShapeError(ValidationError):
    """Array arguments have incompatible shapes or lengths."""


class NumericError(FogtypeError):
    """A numeric computation produced non-finite values."""


class UndefinedMetricError(FogtypeError):
    """A metric is undefined for the given input (no positive labels,
    a single cluster, constant correlation input, ...)."""
