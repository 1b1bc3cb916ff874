"""Exception types raised by the simulation and control stack."""


class CableTrackError(Exception):
    """Base class for all package errors."""


class InvalidInput(CableTrackError, ValueError):
    pass


class DomainError(CableTrackError, ValueError):
    pass


class CableDegenerate(CableTrackError):
    """Cable length at or below the minimum admissible length."""


class DegenerateForce(CableTrackError):
    """A virtual force is too small to define a direction."""


class BarrierViolation(CableTrackError):
    """A barrier-protected error left its safe set.

    ``layer`` names the control layer that detected it and ``margin`` the
    (non-positive) remaining barrier margin.
    """

    def __init__(self, message, layer=None, margin=None):
        super().__init__(message)
        self.layer = layer
        self.margin = margin


class GainSelectionError(CableTrackError):
    pass


class ConfigError(CableTrackError, ValueError):
    pass


class InfeasibleInitial(CableTrackError):
    pass
