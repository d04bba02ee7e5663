"""Exception types raised across the package."""


class HoloqedError(Exception):
    """Base class for all package errors."""


class AmplitudeBound(HoloqedError):
    """A drive amplitude exceeds the device bound."""


class DimensionMismatch(HoloqedError):
    pass


class LengthMismatch(HoloqedError):
    pass


class NoProgress(HoloqedError):
    """An optimizer stalled before reaching its tolerance.

    The best result found so far is attached so callers can keep it or
    restart with a different seed.
    """

    def __init__(self, message, best=None, history=None):
        super().__init__(message)
        self.best = best
        self.history = history


class NonConvergence(HoloqedError):
    """Power iteration of a transfer channel did not settle."""


class AllRunsFailed(HoloqedError):
    pass


class PositivityLoss(HoloqedError):
    """A density matrix acquired a negative eigenvalue beyond tolerance."""


class SizeExceeded(HoloqedError):
    pass


class NoConvergence(HoloqedError):
    """DMRG sweeps did not meet the energy tolerance."""


class RankDeficiency(HoloqedError):
    pass


class ManifestError(HoloqedError):
    """Run manifest failed schema or cross-field validation."""
