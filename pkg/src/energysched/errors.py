"""Exception types raised across the package."""

from __future__ import annotations


class EnergySchedError(Exception):
    """Base class for all package errors."""


class ModelError(EnergySchedError, ValueError):
    """Invalid channel, arrival, or phase description."""


class NonPositiveProbabilitySum(ModelError):
    pass


class ProbabilitySumMismatch(ModelError):
    pass


class DuplicateState(ModelError):
    pass


class NegativeRate(ModelError):
    pass


class SlotBeyondSchedule(EnergySchedError, IndexError):
    pass


class RateOutOfRange(EnergySchedError, ValueError):
    pass


class LambdaAtVertex(EnergySchedError, ValueError):
    pass


class LambdaOutOfRange(EnergySchedError, ValueError):
    pass


class InfeasibleTarget(EnergySchedError, RuntimeError):
    pass


class IndexOutOfRange(EnergySchedError, IndexError):
    pass


class MissingState(EnergySchedError, KeyError):
    pass


class HorizonExceeded(EnergySchedError, IndexError):
    pass


class NoArrivals(EnergySchedError, ValueError):
    pass


class BetaExceedsDelta(EnergySchedError, ValueError):
    pass


class InvalidWindow(EnergySchedError, ValueError):
    pass


class PreconditionViolated(EnergySchedError, ValueError):
    pass


class GammaNonpositive(EnergySchedError, ValueError):
    pass


class ScenarioError(EnergySchedError, ValueError):
    """Malformed or inconsistent scenario file."""
