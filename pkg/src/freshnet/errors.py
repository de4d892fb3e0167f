"""Exception types shared across the package."""


class FreshnetError(Exception):
    """Base class for all freshnet errors."""


class EnumerationCapError(FreshnetError):
    """An implicit activation-set family is too large to materialize."""

    def __init__(self, required: int, cap: int):
        super().__init__(
            f"family would materialize {required} sets, exceeding the cap of {cap}"
        )
        self.required = required
        self.cap = cap


class UncoveredLinkError(FreshnetError):
    """Some link appears in no activation set, so its age is unbounded."""


class UnboundedAgeError(FreshnetError):
    """A link with positive weight has zero activation or success frequency."""


class UnstableQueueError(FreshnetError):
    """Arrival rate is not strictly below the service rate."""


class NoBracketError(FreshnetError):
    """A root bracket could not be established for a fixed-point equation."""


class OracleBudgetError(FreshnetError):
    """A brute-force oracle was asked for an instance beyond its budget."""


class SimulationConfigError(FreshnetError):
    """Inconsistent simulation parameters (horizon, warmup, link counts)."""
