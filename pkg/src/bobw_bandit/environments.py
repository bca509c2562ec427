"""Loss generators for stochastic, adversarial and corrupted settings.

An environment is reset with a horizon and a ``numpy.random.Generator`` and
then queried once per round through ``gen_round(t, history)`` (rounds are
1-based). Oblivious environments precompute their whole loss stream at reset,
so the stream never depends on which arms the policy plays; ``loss_matrix()``
exposes it for the compiled trial loops.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import SpecError


# --- per-arm distributions -------------------------------------------------

@dataclass(frozen=True)
class Bernoulli:
    mu: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.mu <= 1.0:
            raise SpecError(f"Bernoulli mean {self.mu} outside [0, 1]")

    @property
    def mean(self) -> float:
        return self.mu

    @property
    def variance(self) -> float:
        return self.mu * (1.0 - self.mu)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return (rng.random(size) < self.mu).astype(np.float64)


@dataclass(frozen=True)
class Beta:
    a: float
    b: float

    def __post_init__(self) -> None:
        if not (self.a > 0 and self.b > 0):
            raise SpecError("Beta parameters must be positive")

    @property
    def mean(self) -> float:
        return self.a / (self.a + self.b)

    @property
    def variance(self) -> float:
        s = self.a + self.b
        return self.a * self.b / (s * s * (s + 1.0))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.beta(self.a, self.b, size)


@dataclass(frozen=True)
class Discrete:
    points: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        pts, pr = np.asarray(self.points, float), np.asarray(self.probs, float)
        if pts.shape != pr.shape or pts.size == 0:
            raise SpecError("support points and probabilities must have equal, nonzero length")
        if np.any(pts < 0) or np.any(pts > 1):
            raise SpecError("support points must lie in [0, 1]")
        if np.any(pr < 0) or abs(pr.sum() - 1.0) > 1e-9:
            raise SpecError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "points", tuple(float(x) for x in pts))
        object.__setattr__(self, "probs", tuple(float(x) for x in pr))

    @property
    def mean(self) -> float:
        return float(np.dot(self.points, self.probs))

    @property
    def variance(self) -> float:
        pts = np.asarray(self.points)
        return float(np.dot(self.probs, (pts - self.mean) ** 2))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        cdf = np.cumsum(self.probs)
        idx = np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), len(cdf) - 1)
        return np.asarray(self.points)[idx]


@dataclass(frozen=True)
class Constant:
    v: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.v <= 1.0:
            raise SpecError(f"constant loss {self.v} outside [0, 1]")

    @property
    def mean(self) -> float:
        return self.v

    @property
    def variance(self) -> float:
        return 0.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, self.v)


ArmDistribution = Bernoulli | Beta | Discrete | Constant


@dataclass(frozen=True)
class StochasticSpec:
    arms: tuple[ArmDistribution, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "arms", tuple(self.arms))
        if not self.arms:
            raise SpecError("need at least one arm")

    @property
    def num_arms(self) -> int:
        return len(self.arms)

    def sample_matrix(self, rng: np.random.Generator, horizon: int) -> np.ndarray:
        # column by column so arm i's stream does not depend on other arms' laws
        return np.column_stack([d.sample(rng, horizon) for d in self.arms])


@dataclass(frozen=True)
class TheoryInstance:
    """Ground-truth moments of a stochastic instance (arm indices 0-based)."""

    mu: tuple[float, ...]
    sigma_sq: tuple[float, ...]

    @property
    def mu_star(self) -> float:
        return min(self.mu)

    @property
    def optimal_arm(self) -> int:
        return int(np.argmin(self.mu))

    @property
    def gaps(self) -> tuple[float, ...]:
        m = self.mu_star
        return tuple(x - m for x in self.mu)

    @property
    def unique_optimum(self) -> bool:
        return sum(1 for x in self.mu if x == self.mu_star) == 1

    def suboptimal(self) -> list[int]:
        i_star = self.optimal_arm
        return [i for i in range(len(self.mu)) if i != i_star]


# --- adversarial generators --------------------------------------------------

@dataclass(frozen=True)
class Scripted:
    losses: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.losses, dtype=np.float64)
        if m.ndim != 2 or m.size == 0:
            raise SpecError("scripted losses must be a non-empty T x K matrix")
        if not np.all(np.isfinite(m)) or np.any(m < 0) or np.any(m > 1):
            raise SpecError("scripted losses must lie in [0, 1]")
        m.setflags(write=False)
        object.__setattr__(self, "losses", m)

    @classmethod
    def from_csv(cls, path: str | Path) -> "Scripted":
        with open(path, newline="") as fh:
            rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
        if len({len(r) for r in rows}) > 1:
            raise SpecError("ragged CSV")
        return cls(np.array(rows))

    @property
    def num_arms(self) -> int:
        return self.losses.shape[1]


@dataclass(frozen=True)
class StochasticallyConstrained:
    """Alternate between two stochastic laws at the given switch rounds."""

    first: StochasticSpec
    second: StochasticSpec
    switch_rounds: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.first.num_arms != self.second.num_arms:
            raise SpecError("both laws need the same number of arms")
        object.__setattr__(self, "switch_rounds", tuple(sorted(int(r) for r in self.switch_rounds)))

    @property
    def num_arms(self) -> int:
        return self.first.num_arms


@dataclass(frozen=True)
class WorstCaseSwitch:
    """Play ``before`` until ``switch_round`` - 1, then ``after``."""

    switch_round: int
    before: tuple[float, ...]
    after: tuple[float, ...]

    def __post_init__(self) -> None:
        b, a = np.asarray(self.before, float), np.asarray(self.after, float)
        if b.shape != a.shape or b.ndim != 1:
            raise SpecError("profiles must be equal-length vectors")
        if np.any(b < 0) or np.any(b > 1) or np.any(a < 0) or np.any(a > 1):
            raise SpecError("profiles must lie in [0, 1]")

    @property
    def num_arms(self) -> int:
        return len(self.before)


@dataclass(frozen=True)
class Adaptive:
    """History-measurable adversary: ``fn(t, history) -> loss vector``.

    ``history`` is the list of ``(loss_vector, chosen_arm)`` of earlier rounds.
    """

    num_arms: int
    fn: Callable[[int, list], Sequence[float]]


AdversarialSpec = Scripted | StochasticallyConstrained | WorstCaseSwitch | Adaptive


# --- corruption -------------------------------------------------------------

@dataclass(frozen=True)
class FlipOptimalPrefix:
    pass


@dataclass(frozen=True)
class RandomSpikes:
    rate: float

    def __post_init__(self) -> None:
        if not 0.0 < self.rate <= 1.0:
            raise SpecError("spike rate must lie in (0, 1]")


@dataclass(frozen=True)
class CorruptionSpec:
    base: StochasticSpec
    budget: float
    strategy: FlipOptimalPrefix | RandomSpikes = FlipOptimalPrefix()

    def __post_init__(self) -> None:
        if not self.budget >= 0:
            raise SpecError("corruption budget must be nonnegative")
        if self.base.num_arms < 2 and isinstance(self.strategy, FlipOptimalPrefix):
            raise SpecError("FlipOptimalPrefix needs at least two arms")

    @property
    def num_arms(self) -> int:
        return self.base.num_arms


EnvSpec = StochasticSpec | AdversarialSpec | CorruptionSpec


def ground_truth(spec: EnvSpec) -> TheoryInstance:
    """Exact means and variances of the (pre-corruption) law."""
    if isinstance(spec, CorruptionSpec):
        spec = spec.base
    if not isinstance(spec, StochasticSpec):
        raise SpecError("ground truth exists only for stochastic or corrupted specs")
    inst = TheoryInstance(tuple(d.mean for d in spec.arms), tuple(d.variance for d in spec.arms))
    if not inst.unique_optimum:
        warnings.warn("optimal arm is not unique; stochastic upper bounds assume uniqueness",
                      stacklevel=2)
    return inst


def corrupt_matrix(spec: CorruptionSpec, clean: np.ndarray,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Apply the corruption strategy to a clean loss matrix.

    Returns ``(corrupted, active)`` where ``active[t]`` marks rounds that began
    with budget left (the adversary's attack window). The realised total
    ``sum_t max_i |corrupted - clean|`` never exceeds the budget.
    """
    out = clean.copy()
    horizon, k = clean.shape
    active = np.zeros(horizon, dtype=bool)
    remaining = float(spec.budget)
    mu = np.array([d.mean for d in spec.base.arms])
    order = np.argsort(mu, kind="stable")
    best, runner_up = int(order[0]), int(order[1]) if k > 1 else int(order[0])
    spikes = None
    if isinstance(spec.strategy, RandomSpikes):
        spikes = (rng.random(horizon) < spec.strategy.rate, rng.integers(0, k, horizon))
    for t in range(horizon):
        if remaining <= 1e-12:
            break
        active[t] = True
        if spikes is None:
            up = min(1.0 - clean[t, best], remaining)
            down = min(clean[t, runner_up], remaining)
            out[t, best] = clean[t, best] + up
            out[t, runner_up] = clean[t, runner_up] - down
            remaining -= max(up, down)
        elif spikes[0][t]:
            i = int(spikes[1][t])
            target = 1.0 - clean[t, i]
            step = float(np.clip(target - clean[t, i], -remaining, remaining))
            out[t, i] = clean[t, i] + step
            remaining -= abs(step)
    return out, active


class Environment:
    """Runtime wrapper: ``reset`` then ``gen_round`` for t = 1..T."""

    def __init__(self, spec: EnvSpec):
        self.spec = spec
        self.num_arms = spec.num_arms
        self.oblivious = not isinstance(spec, Adaptive)
        self._losses: np.ndarray | None = None
        self._clean: np.ndarray | None = None
        self._active: np.ndarray | None = None
        self.horizon = 0

    def reset(self, horizon: int, rng: np.random.Generator) -> None:
        spec = self.spec
        self.horizon = horizon
        self._clean = None
        self._active = None
        if isinstance(spec, StochasticSpec):
            self._losses = spec.sample_matrix(rng, horizon)
        elif isinstance(spec, CorruptionSpec):
            clean = spec.base.sample_matrix(rng, horizon)
            self._losses, self._active = corrupt_matrix(spec, clean, rng)
            self._clean = clean
        elif isinstance(spec, Scripted):
            if spec.losses.shape[0] < horizon:
                raise SpecError(f"scripted matrix has {spec.losses.shape[0]} rows, need {horizon}")
            self._losses = np.array(spec.losses[:horizon])
        elif isinstance(spec, StochasticallyConstrained):
            a = spec.first.sample_matrix(rng, horizon)
            b = spec.second.sample_matrix(rng, horizon)
            phase = np.searchsorted(np.asarray(spec.switch_rounds), np.arange(1, horizon + 1),
                                    side="right") % 2
            self._losses = np.where(phase[:, None] == 0, a, b)
        elif isinstance(spec, WorstCaseSwitch):
            rounds = np.arange(1, horizon + 1)[:, None]
            self._losses = np.where(rounds < spec.switch_round, np.asarray(spec.before, float),
                                    np.asarray(spec.after, float))
        elif isinstance(spec, Adaptive):
            self._losses = np.empty((horizon, spec.num_arms))
        else:
            raise SpecError(f"unsupported environment spec {spec!r}")

    def gen_round(self, t: int, history: list | None = None) -> tuple[np.ndarray, np.ndarray | None]:
        """Loss vector for round ``t`` and, when corrupted, the clean one."""
        if self._losses is None:
            raise SpecError("environment not reset")
        if not 1 <= t <= self.horizon:
            raise SpecError(f"round {t} outside 1..{self.horizon}")
        if isinstance(self.spec, Adaptive):
            v = np.asarray(self.spec.fn(t, history or []), dtype=np.float64)
            if v.shape != (self.num_arms,) or np.any(v < 0) or np.any(v > 1):
                raise SpecError("adaptive adversary produced an invalid loss vector")
            self._losses[t - 1] = v
            return v.copy(), None
        clean = None if self._clean is None else self._clean[t - 1].copy()
        return self._losses[t - 1].copy(), clean

    def loss_matrix(self) -> np.ndarray:
        if not self.oblivious or self._losses is None:
            raise SpecError("loss matrix is only available for oblivious environments after reset")
        return self._losses

    @property
    def clean_matrix(self) -> np.ndarray | None:
        return self._clean

    @property
    def attack_window(self) -> np.ndarray | None:
        return self._active


def realized_corruption(clean: np.ndarray, corrupted: np.ndarray) -> float:
    return float(np.abs(corrupted - clean).max(axis=1).sum())

