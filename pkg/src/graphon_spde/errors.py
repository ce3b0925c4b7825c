"""Exception types shared across the package."""


class IncommensurableGridsError(ValueError):
    """Raised when two grid resolutions admit no exact common refinement."""


class AliasingError(ValueError):
    """Raised when a synthesis grid is too coarse for the requested spectrum."""


class QuadratureConvergenceError(RuntimeError):
    """Raised when adaptive quadrature exhausts its budget.

    Carries the worst offending cell pair in ``cell_pair`` and the error
    estimate reached in ``error_estimate``.
    """

    def __init__(self, message, cell_pair=None, error_estimate=None):
        super().__init__(message)
        self.cell_pair = cell_pair
        self.error_estimate = error_estimate


class NonFiniteStateError(FloatingPointError):
    """Raised when an integrator state or increment turns NaN/Inf.

    ``cell`` is the first offending cell index, ``step`` the step count.
    """

    def __init__(self, message, cell=None, step=None):
        super().__init__(message)
        self.cell = cell
        self.step = step


class ConfigError(ValueError):
    """Raised for invalid experiment configuration files or values."""
