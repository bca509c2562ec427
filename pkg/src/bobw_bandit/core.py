"""Shared value types, exceptions and simplex helpers.

Arms are indexed from 0 throughout the Python API.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SIMPLEX_SUM_TOL = 1e-12
VALIDATE_SUM_TOL = 1e-9


class BanditError(Exception):
    """Base class for all package errors."""


class NotSimplex(BanditError, ValueError):
    pass


class DomainError(BanditError, ValueError):
    pass


class ConvergenceFailure(BanditError, RuntimeError):
    pass


class ConfigError(BanditError, ValueError):
    pass


class StateError(BanditError, RuntimeError):
    pass


class SpecError(BanditError, ValueError):
    pass


class MissingGroundTruth(BanditError, ValueError):
    pass


def _as_array(values: Sequence[float]) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ProbabilityVector:
    """Strictly interior point of the probability simplex."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = _as_array(self.weights)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size == 0:
            raise NotSimplex("probability vector must be a non-empty 1-D array")
        if not np.all(np.isfinite(w)):
            raise NotSimplex("non-finite entry")
        if np.any(w <= 0.0) or np.any(w >= 1.0) and w.size > 1:
            raise NotSimplex(f"entries must lie strictly inside (0, 1): {w}")
        if abs(math.fsum(w) - 1.0) > SIMPLEX_SUM_TOL:
            raise NotSimplex(f"entries sum to {math.fsum(w)!r}, not 1")

    def __len__(self) -> int:
        return self.weights.size

    def __getitem__(self, i):
        return self.weights[i]

    def __array__(self, dtype=None, copy=None):
        return self.weights if dtype is None else self.weights.astype(dtype)

    def sample(self, u: float) -> int:
        """Inverse-CDF draw from a single uniform ``u`` in [0, 1)."""
        return inverse_cdf(self.weights, u)


@dataclass(frozen=True, eq=False)
class LossVector:
    values: np.ndarray

    def __post_init__(self) -> None:
        v = _as_array(self.values)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise DomainError("loss vector must be a finite 1-D array")
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise DomainError(f"losses must lie in [0, 1]: {v}")

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, i):
        return self.values[i]


@dataclass(frozen=True, eq=False)
class EstimatedLossVector:
    """Optimistic loss estimate; only ``arm`` may differ from the hint."""

    values: np.ndarray
    arm: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _as_array(self.values))

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, i):
        return self.values[i]


@dataclass(frozen=True)
class RoundOutcome:
    round: int
    chosen_arm: int
    observed_loss: float
    play_distribution: ProbabilityVector | None


def validate_simplex(v: Sequence[float]) -> ProbabilityVector:
    """Check ``v`` is an interior simplex point and wrap it.

    The accepted sum deviation is ``VALIDATE_SUM_TOL``; accepted vectors are
    renormalised so the returned value meets the tighter type invariant.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0 or not np.all(np.isfinite(arr)):
        raise NotSimplex("expected a finite, non-empty 1-D vector")
    if np.any(arr <= 0.0) or (arr.size > 1 and np.any(arr >= 1.0)):
        raise NotSimplex(f"entries must lie strictly inside (0, 1): {arr}")
    total = math.fsum(arr)
    if abs(total - 1.0) > VALIDATE_SUM_TOL:
        raise NotSimplex(f"entries sum to {total!r}")
    if abs(total - 1.0) > SIMPLEX_SUM_TOL:
        arr = arr / total
    return ProbabilityVector(arr)


def inverse_cdf(weights: np.ndarray, u: float) -> int:
    cdf = np.cumsum(weights)
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, len(weights) - 1)
