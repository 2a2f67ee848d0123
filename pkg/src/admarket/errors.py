"""Exception types shared across the package."""


class AdmarketError(Exception):
    """Base class for all package errors."""


class MarketFormatError(AdmarketError):
    """Instance document is malformed or violates hard structural rules."""


class InfeasibleMarketError(AdmarketError):
    """The market admits no equilibrium (existence condition fails).

    Carries the witness produced by the feasibility check.
    """

    def __init__(self, message, witness_node=None, witness_set=None):
        super().__init__(message)
        self.witness_node = witness_node
        self.witness_set = witness_set


class SizeLimitError(AdmarketError):
    """Exhaustive routine invoked beyond its configured size cap."""


class DomainError(AdmarketError):
    """Numeric input outside the mathematical domain (e.g. beta <= 0)."""


class NoCycleThroughNodeError(AdmarketError):
    """Internal error: no directed cycle through a node that must have one."""


class NotOptimalError(AdmarketError):
    """A point claimed optimal has objective above the allowed tolerance."""


class VerificationFailedError(AdmarketError):
    """An equilibrium or certificate failed verification where a verified
    input was required."""


class AggregationMismatchError(AdmarketError):
    """Copies of one physical good ended up with different per-unit prices
    when mapping a reduced-market equilibrium back."""


class InconsistentTightSetError(AdmarketError):
    """Numeric solution too inaccurate to classify tight constraints
    (support arcs not contained in the tight bang-per-buck arcs)."""


class RoundingFailedError(AdmarketError):
    """Exact rounding failed for every threshold combination.

    ``diagnostics`` records the attempts; the numeric point is still usable.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []
