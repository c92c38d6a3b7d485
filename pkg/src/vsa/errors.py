"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad user input: parameters or data that violate a precondition."""


class NumericalError(RuntimeError):
    """Numerical failure: integrator blowup, eigensolver non-convergence."""


class FormatError(IOError):
    """Malformed on-disk artifact (bad magic, version, truncation)."""
