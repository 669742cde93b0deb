"""Exception types shared across the workbench.

Validation failures (bad configs, malformed files, contract violations)
raise ValidationError subclasses; genuine I/O trouble surfaces as OSError.
The CLI maps these onto exit codes 2 and 3 respectively.
"""


class ValidationError(ValueError):
    """Input violates a documented contract (config, shape, invariant)."""


class DataFormatError(ValidationError):
    """A persisted file does not parse or fails its format invariants."""
