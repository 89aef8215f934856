"""Exceptions raised by the fundsol package."""


class FundsolError(Exception):
    """Base class for all fundsol errors."""


class SymbolError(FundsolError):
    """Invalid symbol, symbol file or evaluation point."""


class InconclusiveCertificate(FundsolError):
    """The sphere grid is too coarse for the Lipschitz margin to decide a property."""


class LevelSetError(FundsolError):
    """The level-set equation P(rho*omega) = s has no admissible root."""


class RootNotConverged(LevelSetError):
    """The safeguarded Newton iteration hit its cap."""

    def __init__(self, message: str, bracket: tuple[float, float]):
        super().__init__(f"{message} (last bracket [{bracket[0]:.17g}, {bracket[1]:.17g}])")
        self.bracket = bracket


class NoValidThreshold(LevelSetError):
    """The threshold scan exhausted s_scan_max without a valid a."""


class CriticalPointError(FundsolError):
    """Critical-point Newton did not converge."""


class BranchJumpError(CriticalPointError):
    """Continuation along s jumped between branches."""


class CapMisalignmentError(FundsolError):
    """A critical point lies outside the cap of its partition-of-unity bump."""


class BudgetExceeded(FundsolError):
    """A quadrature needs more nodes than its cap allows."""


class UnresolvedOscillation(FundsolError):
    """The FFT grid does not resolve the phase for the requested t and x range."""


class ResolutionError(FundsolError):
    """Spectral energy reaches the Nyquist shell, or the evolved data reach the grid boundary."""


class RegimeError(FundsolError):
    """Time value does not belong to the requested envelope regime."""


class EndpointPairError(FundsolError):
    """Index pair is a Hardy/BMO endpoint or not admissible."""


class ConfigError(FundsolError):
    """Invalid run configuration."""


class FitError(FundsolError):
    """Power-law fit rejected its input."""
