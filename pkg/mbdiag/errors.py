"""
Errors Module

Exception types raised by mbdiag. Every error derives from MbdiagError,
itself a ValueError, and the command line maps it to exit code 2.
"""


class MbdiagError(ValueError):
    """Base class for every error the engine raises on bad input or state."""


class ModelError(MbdiagError):
    """Model file or model instance is malformed."""


class RankMismatch(MbdiagError):
    """Index tuple length does not match the tensor rank."""


class UnknownOrbital(MbdiagError):
    """An orbital id outside the declared orbital set was used."""


class UnsupportedOrder(MbdiagError):
    """Requested perturbation order is outside the supported range."""


class UnassignedExternal(MbdiagError):
    """An external line has no orbital range to sum over."""


class DegenerateDenominator(MbdiagError):
    """A cut energy denominator vanished for some index assignment."""

    def __init__(self, cut: int, assignment: dict, value: float):
        self.cut = cut
        self.assignment = assignment
        self.value = value
        super().__init__(
            f"zero denominator {value:.3e} at cut above level {cut} for assignment {assignment}"
        )


class PartsNotDisconnected(MbdiagError):
    """Parts of an ordering family share a line."""


class SectorTooLarge(MbdiagError):
    """Fock sector exceeds the dense dimension cap."""


class SingularResolvent(MbdiagError):
    """E0 - H0 is singular on the Q space."""


class OverlapAmbiguity(MbdiagError):
    """Model-space eigenvectors cannot be told apart by P-weight."""
