"""Exception and warning types raised across the package."""


class EvibError(Exception):
    """Base class for package errors."""


class AliasingError(EvibError, ValueError):
    """A frequency is at or above the Nyquist limit."""


class BinAlignmentError(EvibError, ValueError):
    """A frequency does not fall on an exact FFT bin of the analysis window."""


class InstabilityError(EvibError, ValueError):
    """A continuous or discretised system has a pole outside the stable region."""


class InsufficientDataError(EvibError, ValueError):
    """Not enough samples, points or levels to carry out the operation."""


class RankDeficiencyError(InsufficientDataError):
    """The regression design matrix is not of full column rank."""


class ZeroVarianceError(InsufficientDataError):
    """A correlation input has no spread."""


class DemodulationError(EvibError, ValueError):
    """The reconstructed message is too small to divide by."""


class ConvergenceError(EvibError, RuntimeError):
    """A fit did not reach an acceptable optimum."""


class FormatError(EvibError, ValueError):
    """A file on disk does not follow the documented layout."""


class EvibWarning(UserWarning):
    """Base class for package warnings."""


class CarrierWarning(EvibWarning):
    """Carrier below the perceptual limit; the carrier itself may be felt."""


class ExtrapolationWarning(EvibWarning):
    """Evaluation outside the speed/force range the empirical model covers."""


class SkippedSweepWarning(EvibWarning):
    """A sweep window fell outside the record and was not extracted."""


class DroppedPointWarning(EvibWarning):
    """FRF entries were removed because the setup response is near zero there."""


class CeilingWarning(EvibWarning):
    """The inverse filter hit its boost ceiling on at least one bin."""
