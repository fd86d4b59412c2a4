"""Exception types shared across the toolkit."""


class IcuiError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(IcuiError):
    """Bad inputs: malformed files, inconsistent shapes, contract violations."""


class ParseError(ValidationError):
    """CSV or config content that cannot be parsed."""


class MetricError(ValidationError):
    """A metric is undefined for the given labels (e.g. single-class AUROC)."""
