"""Variance-adaptive best-of-both-worlds multi-armed bandits.

The proposed policy is optimistic FTRL with a log-barrier plus
complementary-entropy regularizer whose per-arm weights grow with the
squared error of a running-mean hint. The package also ships comparator
policies, loss-sequence simulators, regret metrics, closed-form bound
evaluators and a seeded experiment harness.
"""
__version__ = "0.1.0"

from .core import (  # noqa: E402
    BanditError,
    ConfigError,
    ConvergenceFailure,
    DomainError,
    MissingGroundTruth,
    NotSimplex,
    ProbabilityVector,
    SpecError,
    StateError,
)
from .policy import BobwPolicy, EmpiricalMean, Ewma, PolicyConfig  # noqa: E402
from .solver import RegularizerParams, solve_oftrl  # noqa: E402

__all__ = [
    "BanditError", "ConfigError", "ConvergenceFailure", "DomainError", "MissingGroundTruth",
    "NotSimplex", "ProbabilityVector", "SpecError", "StateError", "BobwPolicy", "EmpiricalMean",
    "Ewma", "PolicyConfig", "RegularizerParams", "solve_oftrl", "__version__",
]
