"""Comparator policies sharing the select/update protocol of BobwPolicy.

Everything is in loss form: the UCB indices are lower confidence bounds and
the arm with the smallest index is played.

Tsallis-INF uses the 1/2-Tsallis potential, so the FTRL solution has the
closed shape ``w_i = 4 / (eta_t (L_i - x))^2`` with the normaliser ``x`` found
by a one-dimensional Newton solve. Learning rates: ``eta_t = 2 / sqrt(t)``
with the importance-weighted estimator and ``eta_t = 1 / sqrt(t)`` with the
reduced-variance estimator, whose baseline is ``B_i = 1/2`` whenever
``w_i >= eta_t^2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from . import _kernels
from .core import ConfigError, ProbabilityVector, StateError
from .policy import MIN_HORIZON

DEFAULT_ZETA = 1.2


class Policy(Protocol):
    name: str

    @property
    def num_arms(self) -> int: ...

    def select(self, u: float) -> int: ...

    def update(self, arm: int, observed: float) -> object: ...


@dataclass(frozen=True)
class Ucb1:
    pass


@dataclass(frozen=True)
class UcbV:
    zeta: float = DEFAULT_ZETA


@dataclass(frozen=True)
class TsallisInfIW:
    pass


@dataclass(frozen=True)
class TsallisInfRV:
    pass


@dataclass(frozen=True)
class UniformRandom:
    pass


BaselineKind = Ucb1 | UcbV | TsallisInfIW | TsallisInfRV | UniformRandom


@dataclass(frozen=True)
class BaselineConfig:
    kind: BaselineKind
    num_arms: int
    horizon: int

    def __post_init__(self) -> None:
        if self.num_arms < 1:
            raise ConfigError("num_arms must be positive")
        if self.horizon < max(MIN_HORIZON, self.num_arms):
            raise ConfigError(f"horizon must be >= max(55, K), got {self.horizon}")
        if isinstance(self.kind, UcbV) and not self.kind.zeta > 0:
            raise ConfigError("UCB-V zeta must be positive")


class _Alternating:
    def __init__(self) -> None:
        self._pending = False
        self.round = 1

    def _open(self) -> None:
        if self._pending:
            raise StateError("select called twice without an update")
        self._pending = True

    def _close(self, arm: int, k: int) -> None:
        if not self._pending:
            raise StateError("update called before select")
        if not 0 <= arm < k:
            raise StateError(f"arm {arm} out of range")
        self._pending = False
        self.round += 1


class UcbPolicy(_Alternating):
    """UCB1 or UCB-V on losses; each arm is pulled once in the first K rounds."""

    def __init__(self, num_arms: int, variance_aware: bool = False, zeta: float = DEFAULT_ZETA):
        super().__init__()
        self.k = num_arms
        self.variance_aware = variance_aware
        self.zeta = zeta
        self.name = "ucb_v" if variance_aware else "ucb1"
        self.sums = np.zeros(num_arms)
        self.sq_sums = np.zeros(num_arms)
        self.counts = np.zeros(num_arms, dtype=np.int64)
        self.means = np.zeros(num_arms)
        self.variances = np.zeros(num_arms)

    @property
    def num_arms(self) -> int:
        return self.k

    def select_arm(self) -> int:
        self._open()
        return int(_kernels.ucb_index_arm(self.means, self.variances, self.counts, self.round,
                                          self.zeta, self.variance_aware))

    def select(self, u: float) -> int:
        return self.select_arm()

    def update(self, arm: int, observed: float) -> None:
        self._close(arm, self.k)
        _kernels.ucb_accumulate(self.sums, self.sq_sums, self.counts, self.means,
                                self.variances, int(arm), float(observed))


class TsallisInf(_Alternating):
    def __init__(self, num_arms: int, reduced_variance: bool = False):
        super().__init__()
        self.k = num_arms
        self.reduced_variance = reduced_variance
        self.name = "tsallis_inf_rv" if reduced_variance else "tsallis_inf_iw"
        self.cumulative_estimates = np.zeros(num_arms)
        self._w: np.ndarray | None = None

    @property
    def num_arms(self) -> int:
        return self.k

    @property
    def eta(self) -> float:
        return float(_kernels.tsallis_eta(self.round, self.reduced_variance))

    def select_distribution(self) -> ProbabilityVector:
        self._open()
        self._w = _kernels.tsallis_solve_kernel(self.cumulative_estimates, self.eta)
        return ProbabilityVector(self._w)

    def select(self, u: float) -> int:
        return int(_kernels.sample_arm(self.select_distribution().weights, u))

    def estimate(self, arm: int, observed: float) -> np.ndarray:
        """Loss estimate for the current round without mutating state."""
        if self._w is None or not self._pending:
            raise StateError("select_distribution must be called first")
        return estimate_tsallis(self._w, arm, observed, self.eta, self.reduced_variance)

    def update(self, arm: int, observed: float) -> None:
        eta = self.eta
        w = self._w
        self._close(arm, self.k)
        _kernels.tsallis_accumulate(self.cumulative_estimates, w, int(arm), float(observed),
                                    eta, self.reduced_variance)


def estimate_tsallis(w: np.ndarray, arm: int, observed: float, eta: float,
                     reduced_variance: bool) -> np.ndarray:
    est = np.zeros(w.size)
    _kernels.tsallis_accumulate(est, np.asarray(w, dtype=np.float64), int(arm), float(observed),
                                float(eta), reduced_variance)
    return est


class UniformPolicy(_Alternating):
    name = "uniform"

    def __init__(self, num_arms: int):
        super().__init__()
        self.k = num_arms
        self._p = np.full(num_arms, 1.0 / num_arms)

    @property
    def num_arms(self) -> int:
        return self.k

    def select_distribution(self) -> ProbabilityVector:
        self._open()
        return ProbabilityVector(self._p)

    def select(self, u: float) -> int:
        return int(_kernels.sample_arm(self.select_distribution().weights, u))

    def update(self, arm: int, observed: float) -> None:
        self._close(arm, self.k)


def make_baseline(config: BaselineConfig) -> Policy:
    kind, k = config.kind, config.num_arms
    if isinstance(kind, Ucb1):
        return UcbPolicy(k)
    if isinstance(kind, UcbV):
        return UcbPolicy(k, variance_aware=True, zeta=kind.zeta)
    if isinstance(kind, TsallisInfIW):
        return TsallisInf(k)
    if isinstance(kind, TsallisInfRV):
        return TsallisInf(k, reduced_variance=True)
    if isinstance(kind, UniformRandom):
        return UniformPolicy(k)
    raise ConfigError(f"unknown baseline {kind!r}")
