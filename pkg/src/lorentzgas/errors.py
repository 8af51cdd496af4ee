"""Exception types shared across the package."""


class ConfigError(Exception):
    """Malformed experiment configuration (unknown key, bad value, parse error)."""


class GeometryError(ValueError):
    """Scatterer configuration violates a geometric requirement."""


class HorizonGuardError(RuntimeError):
    """A free flight exceeded the configured maximum; the horizon is suspect."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class StateSpaceError(ValueError):
    """An exact enumeration would not fit in memory."""


class SpectralError(RuntimeError):
    """Eigenvalue selection is ill-conditioned (near-tie of leading moduli)."""
