"""Exception types shared across the package."""


class CVError(ValueError):
    """Base class for invalid inputs."""


class DimensionError(CVError):
    """Wrong matrix shape, mode count or partition."""


class NotUnitaryError(CVError):
    """Matrix fails the unitarity check."""


class NotSymmetricError(CVError):
    """Matrix expected symmetric (or hermitian) is not."""


class BlockStructureError(CVError):
    """2x2 blocks do not have the [[a, -b], [b, a]] form."""


class UnphysicalStateError(CVError):
    """Covariance matrix or density matrix is not a valid state."""


class UncertaintyViolationError(UnphysicalStateError):
    """Positive-definite covariance whose smallest symplectic eigenvalue is below 1/2."""


class NonclassicalAncillaError(CVError):
    """Free operations only admit classical ancillas."""


class NotPureError(CVError):
    """Operation requires a pure state."""


class TruncationError(RuntimeError):
    """Fock-space truncation exceeds the declared budget.

    Attributes:
        tail_mass: probability weight lost to the cutoff.
        required_cutoff: suggested cutoff that would meet the budget, if known.
    """

    def __init__(self, message, tail_mass=None, required_cutoff=None):
        super().__init__(message)
        self.tail_mass = tail_mass
        self.required_cutoff = required_cutoff
