"""Exceptions raised by the inference tools."""


class InferenceError(Exception):
    """Base class for every error raised by the inference_tool package"""


class NetworkError(InferenceError, ValueError):
    """Malformed reaction network or model definition file"""


class HazardOverflowError(InferenceError, ArithmeticError):
    """Hazards left the floating point range or a path reached the event cap"""


class SimulationError(InferenceError, RuntimeError):
    """The Direct method produced an invalid state (e.g. a negative count)"""


class BudgetExhausted(InferenceError, RuntimeError):
    """The budget ledger cannot fund the requested number of realisations"""

    def __init__(self, requested, remaining, consumed):
        self.requested = requested
        self.remaining = remaining
        self.consumed = consumed
        super().__init__(
            f"budget exhausted: requested {requested} unit(s) with {remaining} "
            f"remaining ({consumed} consumed)"
        )


class TruncationError(InferenceError, RuntimeError):
    """The truncated state space is too large or loses too much mass"""


class ObservationError(InferenceError, ValueError):
    """Observation model or dataset is inconsistent"""


class ProposalError(InferenceError, ValueError):
    """Proposal covariance is not symmetric positive-definite"""


class ParticleTuningError(InferenceError, RuntimeError):
    """Particle-count tuning failed to reach the variance band"""

    def __init__(self, message, consumed):
        self.consumed = consumed
        super().__init__(f"{message} (budget spent: {consumed} units)")


class PopulationError(InferenceError, ValueError):
    """ABC population is empty or degenerate"""


class BracketError(InferenceError, ValueError):
    """Budget bracket holds no samples"""
