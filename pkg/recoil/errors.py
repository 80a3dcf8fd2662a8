"""Exceptions raised by the recoil package."""


class RecoilError(Exception):
    """Base class for all recoil errors."""


class ConfigError(RecoilError, ValueError):
    """Invalid run configuration (unknown key, bad unit, bad value)."""


class UnknownSpeciesError(RecoilError, KeyError):
    """Species name not present in the registry."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown species"


class ConventionError(RecoilError, ValueError):
    """Unknown κ convention tag."""


class QuadratureError(RecoilError):
    """Window quadrature did not converge under node doubling.

    Carries the best estimate and the achieved error bound so callers can still
    report a value.
    """

    def __init__(self, message, estimate, error_bound):
        super().__init__(message)
        self.estimate = estimate
        self.error_bound = error_bound


class RootBracketError(RecoilError):
    """Fixed-point equation has no sign change in the search bracket."""
