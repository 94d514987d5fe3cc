"""Exception hierarchy shared by all modules."""


class CglNoiseError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(CglNoiseError, ValueError):
    """Invalid grid, parameter or experiment configuration."""


class GridMismatchError(CglNoiseError, ValueError):
    """Two objects that must share a time grid do not."""


class DivergenceError(CglNoiseError, ArithmeticError):
    """The classical field became non-finite during propagation."""

    def __init__(self, z, message=None):
        self.z = z
        super().__init__(message or f"field diverged at z={z:.6g}")


class NoAttractorError(CglNoiseError):
    """Relaxation did not settle onto a stationary attractor."""


class PairCollapseError(CglNoiseError):
    """A two-pulse configuration merged, split or lost a pulse."""


class MeasurementError(CglNoiseError, ValueError):
    """A field does not have the structure a measurement requires."""


class FidelityError(CglNoiseError):
    """Covariance propagation lost commutator fidelity."""


class ConsistencyError(CglNoiseError):
    """A covariance state failed its physicality check."""


class UndefinedValueError(CglNoiseError, ZeroDivisionError):
    """A normalized observable has a vanishing denominator."""
