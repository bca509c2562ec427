"""Regret trajectories and data-dependent instance quantities."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from . import _kernels
from .core import MissingGroundTruth


class RegretMode(str, Enum):
    PSEUDO = "pseudo"
    REALIZED = "realized"


@dataclass
class TrialRecord:
    """One trial: loss stream, choices and (optionally) corruption data.

    ``losses`` holds the losses the player faced (post-corruption);
    ``clean_losses`` the pre-corruption draws and ``attack_window`` the rounds
    in which the adversary still had budget at the start of the round.
    """

    losses: np.ndarray
    arms: np.ndarray
    policy: str
    environment: str
    seed: int
    gaps: np.ndarray | None = None
    clean_losses: np.ndarray | None = None
    attack_window: np.ndarray | None = None
    extras: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.losses = np.asarray(self.losses, dtype=np.float64)
        self.arms = np.asarray(self.arms, dtype=np.int64)
        if self.losses.ndim != 2 or self.arms.shape != (self.losses.shape[0],):
            raise ValueError("losses must be T x K and arms length T")

    @property
    def horizon(self) -> int:
        return self.losses.shape[0]

    @property
    def observed(self) -> np.ndarray:
        return self.losses[np.arange(self.horizon), self.arms]

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for key, value in asdict(self).items():
            out[key] = value.tolist() if isinstance(value, np.ndarray) else value
        return out

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "TrialRecord":
        def arr(key, dtype=np.float64):
            return None if data.get(key) is None else np.asarray(data[key], dtype=dtype)

        return cls(
            losses=arr("losses"), arms=arr("arms", np.int64), policy=data["policy"],
            environment=data["environment"], seed=int(data["seed"]), gaps=arr("gaps"),
            clean_losses=arr("clean_losses"), attack_window=arr("attack_window", bool),
            extras=data.get("extras", {}),
        )


def regret_trajectory(trial: TrialRecord, mode: RegretMode | str = RegretMode.PSEUDO) -> np.ndarray:
    """Cumulative regret after each round.

    Pseudo mode sums the gap of the played arm, with gaps taken from the
    generating (pre-corruption) distribution. Realized mode compares against
    the best fixed arm in hindsight on the losses the player actually faced,
    so in corrupted runs it measures regret on the post-corruption losses.
    """
    mode = RegretMode(mode)
    t = np.arange(trial.horizon)
    if mode is RegretMode.PSEUDO:
        if trial.gaps is None:
            raise MissingGroundTruth("pseudo-regret needs the arms' gaps")
        return np.cumsum(np.asarray(trial.gaps, dtype=np.float64)[trial.arms])
    i_star = int(np.argmin(trial.losses.sum(axis=0)))
    return np.cumsum(trial.losses[t, trial.arms] - trial.losses[:, i_star])


def compute_L_star(losses: np.ndarray) -> float:
    return float(np.asarray(losses, dtype=np.float64).sum(axis=0).min())


def compute_V1(losses: np.ndarray) -> float:
    m = np.asarray(losses, dtype=np.float64)
    return float(np.abs(np.diff(m, axis=0)).sum())


def compute_C(clean: np.ndarray, corrupted: np.ndarray) -> float:
    return float(np.abs(np.asarray(corrupted, float) - np.asarray(clean, float)).max(axis=1).sum())


def q_infty_objective(losses: np.ndarray, center: Sequence[float]) -> float:
    c = np.asarray(center, dtype=np.float64)
    return float((np.abs(np.asarray(losses, float) - c).max(axis=1) ** 2).sum())


def _smoothed_q(c: np.ndarray, m: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    """Log-sum-exp surrogate of the Q objective (max over +-(l - c)) and its gradient."""
    x = np.concatenate([m - c, c - m], axis=1) / tau
    lse = logsumexp(x, axis=1)
    s = tau * lse
    w = np.exp(x - lse[:, None])
    k = m.shape[1]
    return float(s @ s), 2.0 * (s @ (w[:, k:] - w[:, :k]))


def compute_Q_infty(losses: np.ndarray, tol: float = 1e-6, max_iter: int = 2000,
                    polish: bool = True) -> tuple[float, np.ndarray]:
    """Upper bound on ``min_c sum_t max_i (l_i(t) - c_i)^2`` over c in [0,1]^K.

    Projected subgradient descent with diminishing steps, run from the
    coordinate-wise mean, the midrange and the all-1/2 vector. The subgradient
    runs stall well short of the optimum on some instances, so the best centre
    is then polished by L-BFGS-B on a log-sum-exp smoothing of the max with a
    shrinking temperature. Only exact objective values are compared, and any
    feasible centre certifies an upper bound, so the value never undercuts the
    true minimum.
    """
    m = np.ascontiguousarray(losses, dtype=np.float64)
    starts = [m.mean(axis=0), 0.5 * (m.min(axis=0) + m.max(axis=0)), np.full(m.shape[1], 0.5)]
    best_val, best_c = math.inf, starts[0]
    for start in starts:
        c = np.clip(start, 0.0, 1.0)
        run_best = math.inf
        stall = 0
        for k in range(max_iter):
            val, grad = _kernels.q_infty_value_and_subgradient(m, c)
            if val < best_val:
                best_val, best_c = val, c.copy()
            if val < run_best - tol * max(1.0, run_best):
                run_best = val
                stall = 0
            else:
                stall += 1
                if stall >= 200:
                    break
            gnorm = np.linalg.norm(grad)
            if gnorm == 0.0:
                break
            step = 0.5 / math.sqrt(k + 1.0)
            c = np.clip(c - step * grad / gnorm, 0.0, 1.0)
    if polish and best_val > 0.0:
        c = best_c
        for tau in (1e-2, 1e-3, 1e-4):
            res = minimize(_smoothed_q, c, args=(m, tau), jac=True, method="L-BFGS-B",
                           bounds=[(0.0, 1.0)] * m.shape[1])
            c = np.clip(res.x, 0.0, 1.0)
            val = q_infty_objective(m, c)
            if val < best_val:
                best_val, best_c = val, c.copy()
    return float(best_val), best_c


@dataclass
class DataDependentQuantities:
    L_star: float
    q_infty_upper: float
    V_1: float
    C_realized: float
    P_i: list[float]
    C_realized_per_trial: list[float] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


def data_dependent_quantities(trials: Sequence[TrialRecord]) -> DataDependentQuantities:
    """Across-trial estimates (expectations become trial means)."""
    n = len(trials)
    horizon, k = trials[0].losses.shape
    cum = np.mean([tr.losses.sum(axis=0) for tr in trials], axis=0)
    stacked = np.concatenate([tr.losses for tr in trials], axis=0)
    q, _ = compute_Q_infty(stacked)
    v1 = float(np.mean([compute_V1(tr.losses) for tr in trials]))
    c_per = [compute_C(tr.clean_losses, tr.losses) if tr.clean_losses is not None else 0.0
             for tr in trials]
    pulls = np.zeros(k, dtype=np.int64)
    for tr in trials:
        pulls += np.bincount(tr.arms, minlength=k)
    return DataDependentQuantities(
        L_star=float(cum.min()),
        q_infty_upper=q / n,
        V_1=v1,
        C_realized=float(np.mean(c_per)),
        P_i=(pulls / n).tolist(),
        C_realized_per_trial=c_per,
    )


def aggregate(trajectories: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Per-round mean and standard error (ddof=1; zero for one trial)."""
    arr = np.asarray(trajectories, dtype=np.float64)
    mean = arr.mean(axis=0)
    if arr.shape[0] < 2:
        return mean, np.zeros_like(mean)
    se = arr.std(axis=0, ddof=1) / math.sqrt(arr.shape[0])
    return mean, se


def write_trajectory_csv(path: str | Path, mean: np.ndarray, se: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "mean_regret", "se_regret"])
        for t, (m, s) in enumerate(zip(mean, se), start=1):
            w.writerow([t, repr(float(m)), repr(float(s))])


def load_trial(path: str | Path) -> TrialRecord:
    with open(path) as fh:
        return TrialRecord.from_json(json.load(fh))
