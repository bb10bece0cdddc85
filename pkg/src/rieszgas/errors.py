"""Exception types shared across the package."""


class RieszError(ValueError):
    """Base class for invalid inputs and domain errors."""


class SingularityError(RieszError):
    """Raised when a potential is evaluated at zero separation."""


class PoleError(RieszError):
    """Raised when a continued lattice sum is requested at its pole s = d.

    ``residue`` is the residue of 2*zeta_L at s = d, i.e. |S^{d-1}| / |Q|.
    """

    def __init__(self, message, residue=None):
        super().__init__(message)
        self.residue = residue


class NeutralityError(RieszError):
    """Raised when s <= 0 Jellium energies are asked for a non-neutral system."""


class ConvergenceError(RuntimeError):
    """Raised by iterative numerics that exhaust their budget."""
