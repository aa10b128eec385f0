"""Exception hierarchy shared across the toolkit.

The CLI maps these onto distinct exit codes, so keep the split between
"your input is malformed" and "the numerics failed" intact.
"""


class ConvkitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(ConvkitError):
    """Shapes, ranks, manifests or plans that fail their contracts."""


class NumericError(ConvkitError):
    """Non-finite data or a numerical routine that did not converge."""
