"""Exception types shared across the package."""


class BesovLabError(Exception):
    """Base class for all package errors."""


class BudgetExceededError(BesovLabError):
    """A construction would allocate more atoms than the configured budget."""

    def __init__(self, requested, budget):
        super().__init__(
            f"requested {requested} atoms exceeds budget {budget} "
            f"(set BESOVLAB_BUDGET to raise the cap)"
        )
        self.requested = requested
        self.budget = budget


class GeometryError(BesovLabError):
    """Gluing or placement produced an invalid geometry (e.g. overlap)."""


class BindingError(BesovLabError):
    """A function vector was used with a space it is not bound to."""


class EnergyOverflowError(BesovLabError):
    """A kernel term became non-finite; carries the offending pair."""

    def __init__(self, pair):
        super().__init__(f"non-finite energy term at atom pair {pair}")
        self.pair = pair


class ResolutionError(BesovLabError):
    """A radius grid or level family is too coarse for the requested statistic."""


class ConvergenceError(BesovLabError):
    """An iterative solve did not reach tolerance; carries the best iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InfeasibleError(BesovLabError):
    """Boundary sets cannot be connected by the graph (no admissible potential)."""
