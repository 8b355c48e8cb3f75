"""Exception types shared across the package."""


class NanorodError(Exception):
    """Base class for all package-specific errors."""


class EmptyCrossSection(NanorodError):
    pass


class DisconnectedCrossSection(NanorodError):
    pass


class MissingMidpoint(NanorodError):
    """Four corners of a unit square are present but its midpoint is not."""


class DegenerateRod(NanorodError):
    """Rod too short to contain a single atomic layer spacing."""


class UnknownCell(NanorodError):
    pass


class NonpositiveSeparation(NanorodError):
    """Lennard-Jones evaluated at zero separation."""


class InvalidParameters(NanorodError):
    pass


class NonFinitePosition(NanorodError):
    pass


class ModelNotPairwise(NanorodError):
    """Operation requires bond-resolved (pairwise) energies."""


class OutOfDomain(NanorodError):
    pass


class NotTwiceDifferentiable(NanorodError):
    pass


class KernelViolation(NanorodError):
    """Quadratic form does not vanish on rigid perturbations."""


class NonSkewInput(NanorodError):
    pass


class InadmissibleFrame(NanorodError):
    """Frame columns are not a rotation within tolerance."""


class NonRotation(NanorodError):
    pass


class Interpenetration(NanorodError):
    """Separated halves would overlap at the requested jump."""


class NoContactFound(NanorodError):
    pass


class ModelNotMassSpring(NanorodError):
    pass


class ModelNotApplicable(NanorodError):
    pass


class JumpTooClose(NanorodError):
    pass


class ProfileBoundaryMismatch(NanorodError):
    pass


class ConfigError(NanorodError):
    """Invalid run configuration; message names the offending field."""
