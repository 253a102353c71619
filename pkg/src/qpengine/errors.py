"""Exception hierarchy shared across the package.

The CLI maps ``ValidationError`` to exit code 1 and ``ComputationError``
(or any other failure) to exit code 2.
"""


class QpeError(Exception):
    """Base class for all package errors."""


class ValidationError(QpeError):
    """Input rejected: malformed model, invalid operator, bad parameter."""


class ComputationError(QpeError):
    """A computation could not be completed (non-convergence, budget exceeded)."""


class ImpossibleObservationError(ComputationError):
    """An observation with ~zero probability under the current belief."""

    def __init__(self, outcome, probability):
        self.outcome = outcome
        self.probability = probability
        super().__init__(
            f"observation {outcome!r} has probability {probability:.3e} under the current belief"
        )


class WorkMatchError(ComputationError):
    """A work value that matches no protocol outcome within tolerance."""


class GraphClosureError(ComputationError):
    """Belief-graph enumeration ended without a closed recurrent class."""
