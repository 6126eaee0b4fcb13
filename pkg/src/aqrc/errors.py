"""Exception types raised by the simulator and training code."""


class AqrcError(Exception):
    """Base class for all package errors."""


class TruncationRisk(AqrcError):
    """Requested displacement amplitude is too large for the Fock cutoff."""


class TruncationGuardTripped(AqrcError):
    """Population of the top Fock level exceeded the guard threshold.

    Results of the offending run must be discarded: near the cutoff the
    truncated oscillator develops an artificial nonlinearity.
    """


class IntegratorDrift(AqrcError):
    """Norm of the propagated state drifted beyond tolerance."""


class IncompleteProjectors(AqrcError):
    """Measurement projectors do not sum to the identity."""


class SignalTooShort(AqrcError):
    """Input signal does not cover the requested number of rounds."""


class UnknownScheme(AqrcError):
    """Modulation scheme id is not in the supported set."""


class TooFewShots(AqrcError):
    """Central moments need at least two trajectory records."""


class SingularSystem(AqrcError):
    """Ridge normal equations could not be factorized."""


class NonFiniteLoss(AqrcError):
    """Gradient training diverged to a non-finite loss."""


class DegenerateReservoir(AqrcError):
    """Random reservoir matrix came out identically zero."""


class ConfigError(AqrcError):
    """Experiment configuration failed validation."""
