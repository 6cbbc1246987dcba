"""Exception types raised by the library.

Every failure mode of the public API maps to one of these; they are plain
exceptions carrying a message and, where useful, a payload (e.g. the computed
winding number for a detected obstruction).
"""


class MVSobolevError(Exception):
    """Base class for all library errors."""


class NonConformingBox(MVSobolevError):
    """Box half-widths are not integer multiples of the cube radius."""


class DimOutOfRange(MVSobolevError):
    """Requested skeleton dimension outside the valid range."""


class EmptySkeleton(MVSobolevError):
    """Operation requires a skeleton with at least one face."""


class NotASubset(MVSobolevError):
    """Sub-cubication contains cubes absent from the parent cubication."""


class OutsideTubularNeighborhood(MVSobolevError):
    """Point too far from the target manifold for nearest-point projection."""


class UnknownSeed(MVSobolevError):
    """Unrecognized seed-field name."""


class EvalOutsideDomain(MVSobolevError):
    """Field evaluated at a point outside its declared domain."""


class BadParameterChain(MVSobolevError):
    """Opening/thickening radius parameters violate their strict ordering."""


class DomainTooSmall(MVSobolevError):
    """The skeleton neighborhood does not fit inside the field's domain."""


class NoGap(MVSobolevError):
    """Core cubes touch the complement; no room for a smooth transition."""


class RadiusOrder(MVSobolevError):
    """Small smoothing radius is not below the large one."""


class TooCloseToBoundary(MVSobolevError):
    """Convolution evaluation point closer to the boundary than its radius."""


class ProfileNotMonotone(MVSobolevError):
    """Radial profile failed the r*phi(r) monotonicity grid check."""


class InadmissibleProfile(MVSobolevError):
    """Thickening/shrinking profile parameters violate admissibility."""


class BadDimension(MVSobolevError):
    """Skeleton level incompatible with the construction."""


class BudgetExhausted(MVSobolevError):
    """Iterative parameter search ran out of halvings."""


class SingularSetTooClose(MVSobolevError):
    """Finite-difference collar around the singular set empties the region."""


class EmptyRegion(MVSobolevError):
    """Quadrature region has no volume."""


class StepTooLarge(MVSobolevError):
    """Angular step between consecutive loop samples exceeds pi."""


class ObstructionDetected(MVSobolevError):
    """Topological obstruction found; extension impossible.

    Attributes:
        winding: computed winding number on the offending link loop.
    """

    def __init__(self, message: str, winding: int | None = None):
        super().__init__(message)
        self.winding = winding


class ExtensionFailed(MVSobolevError):
    """No missed point with sufficient margin found on a link sphere."""


class DistanceCertificateFailed(MVSobolevError):
    """Smoothed map strays beyond the tubular radius.

    Attributes:
        report: the distance-certificate report that failed.
    """

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report


class ConfigInvalid(MVSobolevError):
    """Experiment configuration failed schema validation."""
