"""Exception types shared across the toolkit."""


class PerorbError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(PerorbError):
    """Array shapes do not match the loop or model they are paired with."""


class GapTooLarge(PerorbError):
    """Consecutive torus samples are >= 1/2 apart, so the lift is ambiguous."""


class NonPositivePeriod(PerorbError):
    """Loop periods must be strictly positive."""


class SolveFailure(PerorbError):
    """The preconditioning solve produced non-finite values."""


class LineSearchStall(PerorbError):
    """Backtracking found no decrease at machine-level step size."""


class ShrinkLevelViolation(PerorbError):
    """A descent shrank to a point at a level bounded away from zero."""


class InsufficientTail(PerorbError):
    """Trajectory tail too short to classify."""


class BadBracket(PerorbError):
    """Bisection bracket violates the witness predicate at an endpoint."""


class TruncationAboveMax(PerorbError):
    """Truncation level must be strictly below the current path maximum."""


class EmptyInterval(PerorbError):
    """The configured energy interval is empty."""


class BadParameters(PerorbError):
    """Arguments violate a documented precondition."""


class ZeroWinding(PerorbError):
    """Class minimization requires a non-trivial winding vector."""


class DivergenceBelowCu(PerorbError):
    """Periods exceeded the ceiling while minimizing below the c_u bracket."""


class NoWitness(PerorbError):
    """No negative-action contractible loop is available at this energy."""


class TruncationInfeasible(PerorbError):
    """Endpoint actions cannot be separated below the truncation level."""


class RadiusTooLarge(PerorbError):
    """Test radius must stay strictly below the critical radius r1."""


class ClaimViolated(PerorbError):
    """A certified inequality failed; indicates a bug or miscalibrated bounds."""


class LoopLeavesChart(PerorbError):
    """The loop is not contained in the prescribed chart ball."""


class ModelFormatError(PerorbError):
    """Model JSON is malformed; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
