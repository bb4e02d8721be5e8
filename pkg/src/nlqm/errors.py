"""Exception hierarchy shared by all modules.

``NumericalError`` subclasses signal failures of a computation on valid input
(the CLI maps them to exit status 3); ``ValueError`` subclasses signal bad
input (exit status 2).
"""


class NumericalError(RuntimeError):
    """A computation could not be completed."""


class StiffnessError(NumericalError):
    """Adaptive step size fell below the underflow floor."""

    def __init__(self, t, h):
        super().__init__(f"step size underflow at t={t!r} (h={h!r}); problem is too stiff")
        self.t = t
        self.h = h


class StabilityError(NumericalError):
    """Conserved norm drifted beyond the abort threshold."""


class DegenerateStateError(NumericalError):
    """Wavefunction has too many nodes for the logarithmic nonlinearity."""


class BranchError(NumericalError):
    """Complex logarithm branch is undefined or the phase is under-resolved."""


class UndefinedRatioError(NumericalError):
    """A population ratio involves a zero population."""


class InfiniteTimescaleError(ValueError):
    """Collapse time requested for equal rates or zero coupling."""


class InfiniteLifetimeError(ValueError):
    """Lifetime requested with no nonlinearity (theta == 1)."""


class InvalidStateError(ValueError):
    """State violates its construction invariants."""


class GridMismatchError(ValueError):
    """Snapshots do not share a common grid."""
