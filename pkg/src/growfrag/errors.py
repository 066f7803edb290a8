"""Exception hierarchy for the growfrag package."""


class GrowfragError(Exception):
    """Base class for all growfrag errors."""


class DomainError(GrowfragError):
    """Argument outside the (interior of the) domain of the cumulant."""


class NoCriticalPoint(GrowfragError):
    """q * k'(q) - k(q) has no sign change on the searchable interior."""


class LadderExhausted(GrowfragError):
    """Size falls below the smallest threshold of the finite ladder prefix."""


class ZeroRate(GrowfragError):
    """Requested a sample from a measure with zero total mass."""


class InfiniteActivity(GrowfragError):
    """Total spine-jump rate diverges; pointwise sampling impossible."""


class Diverges(GrowfragError):
    """A defining integral is infinite for the requested parameters."""


class MomentError(GrowfragError):
    """Exponential moment of the jump measure diverges."""


class PopulationCap(GrowfragError):
    """Particle count exceeded the configured cap.

    Carries the population (valid up to ``cap_time``) so partial results
    can still be inspected.
    """

    def __init__(self, message, population=None, cap_time=None):
        super().__init__(message)
        self.population = population
        self.cap_time = cap_time


class BarrierNotArmed(GrowfragError):
    """Barrier flags were not maintained for the requested parameters."""


class NotAlive(GrowfragError):
    """No ancestor alive at the requested time."""


class EmptySnapshot(GrowfragError):
    """Operation requires a nonempty snapshot."""


class TooFewSamples(GrowfragError):
    """Not enough (effective) samples for a reliable statistic."""


class ConfigError(GrowfragError):
    """Scenario file failed to parse or validate."""
