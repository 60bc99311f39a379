"""Exception types raised across the package."""


class RDError(Exception):
    """Base class for all analysis errors."""


class InsufficientObservations(RDError):
    """Too few usable observations for the requested fit or test."""

    def __init__(self, side: str, needed: int, found: int):
        self.side = side
        self.needed = needed
        self.found = found
        super().__init__(
            f"side {side!r}: needed {needed} observations, found {found}"
        )


class SingularDesign(RDError):
    """Too few distinct score values in the window to identify the fit."""


class BandwidthTooSmall(RDError):
    """Bandwidth is non-positive or leaves an empty estimation window."""


class ZeroFirstStage(RDError):
    """First-stage jump is numerically zero; fuzzy ratio undefined."""


class EmptySide(RDError):
    """A window side contains no observations."""


class EmptyWindow(RDError):
    """The window contains no observations."""


class EmptyGrid(RDError):
    """A test-inversion grid contains no candidate values."""


class DiscreteScore(RDError):
    """Score has too few distinct values for a continuity-style method."""


class InsufficientBins(RDError):
    """Too few histogram bins on a side for the density fit."""


class CutoffOutsideSupport(RDError):
    """A placebo cutoff falls outside the usable score range."""


class SideAmbiguous(RDError):
    """A placebo cutoff equals the true cutoff."""


class InvalidSpec(RDError):
    """A data-generating specification is inconsistent."""


class ColumnError(RDError):
    """A mapped CSV column is missing, duplicated, or non-numeric."""
