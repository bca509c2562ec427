"""The variance-adaptive optimistic-FTRL policy.

Each round the policy plays the solution of

    p(t) = argmin_p <m(t) + sum_{s<t} lhat(s), p> + sum_i beta_i(t) phi(p_i)

where ``m(t)`` is a per-arm hint (running mean with prior 1/2, or an EWMA for
the path-length variant), ``lhat`` is the hint-centred importance-weighted
estimate and ``beta_i`` grows with the clamped squared prediction error of
arm ``i``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from . import _kernels
from .core import (
    ConfigError,
    EstimatedLossVector,
    ProbabilityVector,
    StateError,
)
from .solver import DEFAULT_TOL, RegularizerParams, solve_oftrl

MIN_HORIZON = 55


@dataclass(frozen=True)
class EmpiricalMean:
    pass


@dataclass(frozen=True)
class Ewma:
    eta: float


HintMode = EmpiricalMean | Ewma


@dataclass(frozen=True)
class PolicyConfig:
    num_arms: int
    horizon: int
    epsilon: float = 0.2
    hint_mode: HintMode = field(default_factory=EmpiricalMean)

    def __post_init__(self) -> None:
        if not (isinstance(self.num_arms, (int, np.integer)) and self.num_arms >= 1):
            raise ConfigError("num_arms must be a positive integer")
        if not (isinstance(self.horizon, (int, np.integer))
                and self.horizon >= max(MIN_HORIZON, self.num_arms)):
            raise ConfigError(f"horizon must be an integer >= max(55, K), got {self.horizon}")
        if not (0.0 < self.epsilon <= 0.5):
            raise ConfigError(f"epsilon must lie in (0, 1/2], got {self.epsilon}")
        if isinstance(self.hint_mode, Ewma):
            if not (0.0 < self.hint_mode.eta < 0.5):
                raise ConfigError(f"EWMA eta must lie in (0, 1/2), got {self.hint_mode.eta}")
        elif not isinstance(self.hint_mode, EmpiricalMean):
            raise ConfigError(f"unknown hint mode {self.hint_mode!r}")

    @property
    def ewma_eta(self) -> float:
        return self.hint_mode.eta if isinstance(self.hint_mode, Ewma) else 0.0


@dataclass
class PolicyState:
    round: int
    gamma: float
    cumulative_estimates: np.ndarray
    hint: np.ndarray
    counts: np.ndarray
    alpha_sums: np.ndarray
    betas: np.ndarray
    last_distribution: ProbabilityVector | None
    loss_sums: np.ndarray
    last_multiplier: float = math.nan

    def to_json(self) -> dict[str, Any]:
        out = {}
        for key, value in asdict(self).items():
            if isinstance(value, np.ndarray):
                value = value.tolist()
            out[key] = value
        dist = self.last_distribution
        out["last_distribution"] = None if dist is None else dist.weights.tolist()
        out["last_multiplier"] = None if math.isnan(self.last_multiplier) else self.last_multiplier
        return out

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "PolicyState":
        dist = data.get("last_distribution")
        lam = data.get("last_multiplier")
        return cls(
            round=int(data["round"]),
            gamma=float(data["gamma"]),
            cumulative_estimates=np.array(data["cumulative_estimates"], dtype=np.float64),
            hint=np.array(data["hint"], dtype=np.float64),
            counts=np.array(data["counts"], dtype=np.int64),
            alpha_sums=np.array(data["alpha_sums"], dtype=np.float64),
            betas=np.array(data["betas"], dtype=np.float64),
            last_distribution=None if dist is None else ProbabilityVector(dist),
            loss_sums=np.array(data["loss_sums"], dtype=np.float64),
            last_multiplier=math.nan if lam is None else float(lam),
        )


def init_state(config: PolicyConfig) -> PolicyState:
    k = config.num_arms
    return PolicyState(
        round=1,
        gamma=math.log(config.horizon),
        cumulative_estimates=np.zeros(k),
        hint=np.full(k, 0.5),
        counts=np.zeros(k, dtype=np.int64),
        alpha_sums=np.zeros(k),
        betas=np.full(k, 1.0 + config.epsilon),
        last_distribution=None,
        loss_sums=np.zeros(k),
    )


def estimate_loss_vector(hint: np.ndarray, p: np.ndarray, arm: int, observed: float) -> np.ndarray:
    """Hint-centred importance-weighted estimate; unbiased given ``p``."""
    est = np.array(hint, dtype=np.float64)
    est[arm] = hint[arm] + (observed - hint[arm]) / p[arm]
    return est


def alpha_increment_value(hint_arm: float, p_arm: float, observed: float, gamma: float) -> float:
    """(observed - m)^2 * min{1, 2 (1 - p) / (p^2 gamma)}."""
    return float(_kernels.bobw_alpha(float(hint_arm), float(p_arm), float(observed), float(gamma)))


class BobwPolicy:
    """Stateful select/update wrapper around :class:`PolicyState`.

    Calls must alternate ``select_distribution`` (or ``select``) and
    ``update``.
    """

    name = "bobw"

    def __init__(self, config: PolicyConfig, tol: float = DEFAULT_TOL):
        self.config = config
        self.tol = tol
        self.state = init_state(config)
        self._pending = False

    @property
    def num_arms(self) -> int:
        return self.config.num_arms

    def select_distribution(self) -> ProbabilityVector:
        s = self.state
        if self._pending:
            raise StateError("select called twice without an update")
        params = RegularizerParams(s.gamma, s.betas)
        warm = None if s.last_distribution is None else s.last_distribution.weights
        report = solve_oftrl(s.hint + s.cumulative_estimates, params, self.tol,
                             warm_start=warm, warm_multiplier=s.last_multiplier)
        s.last_distribution = report.solution
        s.last_multiplier = report.lagrange_multiplier
        self._pending = True
        return report.solution

    def select(self, u: float) -> int:
        return int(_kernels.sample_arm(self.select_distribution().weights, u))

    def _require_pending(self) -> np.ndarray:
        if not self._pending or self.state.last_distribution is None:
            raise StateError("select_distribution must be called first in this round")
        return self.state.last_distribution.weights

    def estimate_loss(self, arm: int, observed: float) -> EstimatedLossVector:
        p = self._require_pending()
        return EstimatedLossVector(estimate_loss_vector(self.state.hint, p, arm, observed), arm)

    def alpha_increment(self, arm: int, observed: float) -> float:
        p = self._require_pending()
        return alpha_increment_value(self.state.hint[arm], p[arm], observed, self.state.gamma)

    def update(self, arm: int, observed: float) -> float:
        """Consume feedback for this round; returns the alpha increment."""
        p = self._require_pending()
        if not 0 <= arm < self.num_arms:
            raise StateError(f"arm {arm} out of range")
        if not 0.0 <= observed <= 1.0:
            raise StateError(f"observed loss {observed} outside [0, 1]")
        s = self.state
        a = _kernels.bobw_update_kernel(
            s.cumulative_estimates, s.hint, s.counts, s.loss_sums, s.alpha_sums, s.betas,
            p, int(arm), float(observed), s.gamma, 1.0 + self.config.epsilon,
            self.config.ewma_eta)
        s.round += 1
        self._pending = False
        return float(a)

    def snapshot(self) -> str:
        cfg = self.config
        hint = {"mode": "empirical_mean"} if isinstance(cfg.hint_mode, EmpiricalMean) \
            else {"mode": "ewma", "eta": cfg.hint_mode.eta}
        return json.dumps({
            "config": {"num_arms": cfg.num_arms, "horizon": cfg.horizon,
                       "epsilon": cfg.epsilon, "hint_mode": hint},
            "state": self.state.to_json(),
        })

    @classmethod
    def restore(cls, text: str, tol: float = DEFAULT_TOL) -> "BobwPolicy":
        data = json.loads(text)
        c = data["config"]
        hint = EmpiricalMean() if c["hint_mode"]["mode"] == "empirical_mean" \
            else Ewma(float(c["hint_mode"]["eta"]))
        policy = cls(PolicyConfig(int(c["num_arms"]), int(c["horizon"]), float(c["epsilon"]), hint), tol)
        policy.state = PolicyState.from_json(data["state"])
        return policy
