"""growfrag: simulation and statistical verification of compensated fragmentations.

A truncated branching Levy process simulator with the full genealogy
(labels, K-counters, nested truncations), both spine constructions
(backward size-biased tilting and the forward decorated Levy process with
immigration), and a Monte Carlo harness checking the martingale identities
and asymptotics at desk scale.
"""

from .dislocation import (
    BinaryConservative,
    DislocationModel,
    FiniteAtomic,
    MassPartition,
    TruncationLadder,
    level_of,
)
from .genealogy import EVE, Label, ancestor_at, is_prefix
from .branching import Population, replay_view, truncate_view
from .martingales import MartingaleTrace, additive, derivative, largest, stopped_derivative
from .spine import (
    SpineOutcome,
    backward_tilted_estimate,
    forward_decorated,
    many_to_one_check,
    spine_law_check,
)
from .stats import SampleSet, convergence_report, ks_two_sample, mean_se

__version__ = "0.1.0"

__all__ = [
    "BinaryConservative",
    "DislocationModel",
    "EVE",
    "FiniteAtomic",
    "Label",
    "MartingaleTrace",
    "MassPartition",
    "Population",
    "SampleSet",
    "SpineOutcome",
    "TruncationLadder",
    "additive",
    "ancestor_at",
    "backward_tilted_estimate",
    "convergence_report",
    "derivative",
    "forward_decorated",
    "is_prefix",
    "ks_two_sample",
    "largest",
    "level_of",
    "many_to_one_check",
    "mean_se",
    "replay_view",
    "spine_law_check",
    "stopped_derivative",
    "truncate_view",
]
