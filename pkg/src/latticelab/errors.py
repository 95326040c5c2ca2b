"""Exception hierarchy shared by every latticelab module."""


class LatticeLabError(Exception):
    """Base class for all errors raised by latticelab."""


class InvalidDistribution(LatticeLabError, ValueError):
    pass


class MixedTimeKinds(LatticeLabError, ValueError):
    """Two walks combined with different time kinds (discrete vs continuous)."""


class RankDeficient(LatticeLabError, ValueError):
    """The step support does not span a rank-2 lattice."""


class DegenerateCovariance(LatticeLabError, ValueError):
    """det Q <= 0 where a truly two-dimensional walk is required."""


class GridTooLarge(LatticeLabError, MemoryError):
    pass


class HorizonExceeded(LatticeLabError, ValueError):
    """Requested time lies beyond the stored environment path."""


class InsufficientEnvironments(LatticeLabError, ValueError):
    pass


class BoundaryMassExceeded(LatticeLabError, RuntimeError):
    """Truncation to a finite box is no longer negligible."""


class BoxTooSmall(LatticeLabError, ValueError):
    pass


class ConfigInvalid(LatticeLabError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ManifestCorrupt(LatticeLabError, RuntimeError):
    pass
