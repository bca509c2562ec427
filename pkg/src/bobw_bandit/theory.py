"""Closed-form regret bounds and the numeric checks built on them.

Natural logarithms throughout. ``z`` denotes the per-arm variance-to-gap
ratio ``sigma_i^2 / Delta_i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .core import DomainError
from .environments import TheoryInstance


class FormulaId(str, Enum):
    STOCHASTIC_UPPER = "stochastic_upper"
    ADVERSARIAL_UPPER = "adversarial_upper"
    PATHLENGTH_UPPER = "pathlength"
    LOWER_SIMPLIFIED = "lower_bound_simplified"
    LOWER_APPROX = "lower_bound_approx"
    CORRUPTED_SHAPE = "corrupted_shape"


@dataclass
class BoundReport:
    value: float
    components: list[float]
    formula_id: FormulaId
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"formula_id": self.formula_id.value, "value": self.value,
                "components": list(self.components), **self.extra}


# --- constants of the stochastic analysis ------------------------------------

def delta_of_epsilon(eps: float) -> float:
    """Cubic-remainder constant: beta0^3 (-log(1 - 1/beta0) - 1/beta0 - 1/(2 beta0^2))."""
    if not 0.0 < eps <= 0.5:
        raise DomainError(f"epsilon must lie in (0, 1/2], got {eps}")
    b = 1.0 + eps
    return b ** 3 * math.log(b / eps) - b * b - b / 2.0


def h_threshold(eps: float) -> float:
    b = 1.0 + eps
    return b / (2.0 * (1.0 + delta_of_epsilon(eps) / b))


def h_of_z(z: float, eps: float) -> float:
    """Per-arm limiting coefficient of log T in the stochastic regret bound."""
    if not z >= 0.0:
        raise DomainError(f"z must be nonnegative, got {z}")
    b = 1.0 + eps
    d = delta_of_epsilon(eps)
    if z <= b / (2.0 * (1.0 + d / b)):
        return 2.0 * b
    r = 1.0 + math.sqrt(1.0 + 2.0 * d / z)
    return (2.0 * z * r - 2.0 * d + 4.0 * d * (math.log(z / b) + math.log(r))
            + b * b / z - 2.0 * b)


def fit_c_constant(eps: float, z_grid: np.ndarray | None = None) -> float:
    """Smallest c with h(z) <= max{4z + c log(1+z), 2(1+eps)} on a log-grid."""
    if z_grid is None:
        z_grid = np.logspace(-4, 4, 20001)
    floor = 2.0 * (1.0 + eps)
    c = 0.0
    for z in z_grid:
        h = h_of_z(float(z), eps)
        if h > floor:
            c = max(c, (h - 4.0 * z) / math.log1p(z))
    return c


def c_constant(eps: float) -> float:
    """The table value 4.2 at eps = 0.2, otherwise the fitted constant."""
    if math.isclose(eps, 0.2):
        return 4.2
    return fit_c_constant(eps)


# --- upper bounds ------------------------------------------------------------

def _arm_stats(instance: TheoryInstance) -> list[tuple[float, float]]:
    gaps = instance.gaps
    return [(instance.sigma_sq[i], gaps[i]) for i in instance.suboptimal()]


def upper_bound_stochastic(instance: TheoryInstance, eps: float, horizon: int) -> BoundReport:
    """Leading log T term of the stochastic upper bound (unique optimum)."""
    if not instance.unique_optimum:
        raise DomainError("stochastic upper bound needs a unique optimal arm")
    c = c_constant(eps)
    floor = 2.0 * (1.0 + eps)
    log_t = math.log(horizon)
    comps = []
    for s2, gap in _arm_stats(instance):
        z = s2 / gap
        comps.append(max(4.0 * z + c * math.log1p(z), floor))
    value = (floor + sum(comps)) * log_t
    return BoundReport(value, comps, FormulaId.STOCHASTIC_UPPER,
                       {"c": c, "log_T": log_t, "constant_term": floor})


def upper_bound_adversarial(num_arms: int, horizon: int, L_star: float, Q_infty: float) -> BoundReport:
    """sqrt(K log T min{T, 4L*, 4(T-L*), 4Q}); additive K log T reported separately."""
    m = min(horizon, 4.0 * L_star, 4.0 * (horizon - L_star), 4.0 * Q_infty)
    log_t = math.log(horizon)
    lead = math.sqrt(num_arms * log_t * max(m, 0.0))
    return BoundReport(lead, [lead], FormulaId.ADVERSARIAL_UPPER,
                       {"additive_K_log_T": num_arms * log_t, "min_term": m})


def upper_bound_pathlength(num_arms: int, horizon: int, L_star: float, Q_infty: float,
                           V1: float, eta: float) -> BoundReport:
    if not 0.0 < eta < 0.5:
        raise DomainError("eta must lie in (0, 1/2)")
    m = min(horizon, 4.0 * L_star, 4.0 * (horizon - L_star), 4.0 * Q_infty, 8.0 * V1 / eta)
    k = num_arms
    lead = math.sqrt(k / (1.0 - 2.0 * eta) * (max(m, 0.0) + k / eta) * math.log(horizon))
    return BoundReport(lead, [lead], FormulaId.PATHLENGTH_UPPER,
                       {"additive_K_log_T": k * math.log(horizon), "min_term": m})


def corrupted_shape(stochastic_bound: float, corruption: float) -> BoundReport:
    """R + sqrt(C R), the two terms reported separately (constant unspecified)."""
    extra = math.sqrt(max(corruption, 0.0) * stochastic_bound)
    return BoundReport(stochastic_bound + extra, [stochastic_bound, extra], FormulaId.CORRUPTED_SHAPE)


# --- lower bound --------------------------------------------------------------

def lower_bound_denominator(mu_star: float, mu_i: float, sigma_sq: float) -> float:
    """KL-infimum term of the moment-based lower bound for one arm."""
    if not (0.0 < mu_star < mu_i <= 1.0):
        raise DomainError("need 0 < mu* < mu_i <= 1")
    if sigma_sq < 0 or sigma_sq > mu_i * (1.0 - mu_i) + 1e-15:
        raise DomainError("need 0 <= sigma^2 <= mu_i (1 - mu_i)")
    w = mu_i * mu_i / (sigma_sq + mu_i * mu_i)
    second = 0.0
    if sigma_sq > 0:
        second = (1.0 - w) * math.log(sigma_sq / (sigma_sq + mu_i * (mu_i - mu_star)))
    return w * math.log(mu_i / mu_star) + second


def lower_bound_simplified(instance: TheoryInstance, allow_zero_variance: bool = False) -> BoundReport:
    """sum over suboptimal arms of Delta_i / D_i (coefficient of log T).

    Zero-variance arms are rejected unless ``allow_zero_variance``, in which
    case the vanishing second log term takes its limit value 0.
    """
    mu_star = instance.mu_star
    if mu_star <= 0.0:
        raise DomainError("mu* = 0 makes the first log term diverge")
    comps = []
    flagged = []
    for i in instance.suboptimal():
        mu_i, s2 = instance.mu[i], instance.sigma_sq[i]
        if s2 == 0.0:
            if not allow_zero_variance:
                raise DomainError(f"arm {i} has zero variance (degenerate moment pair)")
            flagged.append(i)
        comps.append((mu_i - mu_star) / lower_bound_denominator(mu_star, mu_i, s2))
    return BoundReport(sum(comps), comps, FormulaId.LOWER_SIMPLIFIED,
                       {"zero_variance_arms": flagged} if flagged else {})


def dinf2_raw(M1: float, M2: float, one_minus_mu_star: float) -> float:
    """Moment-constrained KL infimum in reward moments, evaluated literally."""
    a = one_minus_mu_star
    if not 0.0 < a < 1.0:
        raise DomainError("1 - mu* must lie in (0, 1)")
    # the variance M2 - M1^2 must clear rounding noise in M1^2
    if not (0.0 <= M1 <= 1.0 and M2 <= M1 + 1e-15 and M2 - M1 * M1 > 1e-14):
        raise DomainError("need M1^2 < M2 <= M1 (non-degenerate moments on [0, 1])")
    mu_star = 1.0 - a
    nu = (1.0 - M1) * (M1 - 1.0 + mu_star) / (
        (1.0 - M1) * a * a - (1.0 - M2) * a + M1 - M2)
    denom = 1.0 - 2.0 * M1 + M2
    first = (1.0 - M1) ** 2 / denom * math.log(1.0 - ((M1 - M2) / (1.0 - M1) - a) * nu)
    second = (M2 - M1 * M1) / denom * math.log(1.0 - mu_star * nu)
    return first + second


def lower_bound_from_moments(instance: TheoryInstance) -> float:
    total = 0.0
    for i in instance.suboptimal():
        mu_i, s2 = instance.mu[i], instance.sigma_sq[i]
        M1 = 1.0 - mu_i
        total += (mu_i - instance.mu_star) / dinf2_raw(M1, M1 * M1 + s2, 1.0 - instance.mu_star)
    return total


def lower_bound_approx(z: float) -> float:
    if not z > 0:
        raise DomainError("z must be positive")
    return 2.0 * z + 0.5 * math.log1p(z) + 1.0


def lower_bound_approx_refined(z: float) -> float:
    if not z > 0:
        raise DomainError("z must be positive")
    return 2.0 * z + 0.06 * math.log1p(60.0 * z) + 1.0


def lower_bound_sup_limit(z: float) -> float:
    """Closed-form supremum over feasible (mu*, mu_i) at fixed z.

    The ratio Delta / D increases as Delta -> 0 and as mu* -> 1; in that
    limit it tends to 1 / (1 - z log(1 + 1/z)).
    """
    return 1.0 / (1.0 - z * math.log1p(1.0 / z))


def lower_bound_sup(z: float, gaps: np.ndarray | None = None, grid: int = 2001) -> float:
    """Grid supremum of Delta / D over gaps and mu* with sigma^2 = z Delta.

    For each gap the mu* grid runs over the feasible interval, whose right
    end (where sigma^2 = mu_i (1 - mu_i)) is included exactly.
    """
    if gaps is None:
        gaps = np.logspace(-9, 0, 46)
    best = 0.0
    for gap in gaps:
        s2 = z * gap
        if 4.0 * s2 > 1.0:
            continue
        disc = math.sqrt(1.0 - 4.0 * s2)
        mi_hi = min(1.0, 0.5 * (1.0 + disc))
        mi_lo = max(gap, 0.5 * (1.0 - disc))
        if mi_hi - gap <= 0 or mi_hi <= mi_lo:
            continue
        # geometric spacing toward both ends of the feasible mu_i interval
        u = np.linspace(0.0, 1.0, grid)
        mi = mi_lo + (mi_hi - mi_lo) * (1.0 - (1.0 - u) ** 3)
        mi = mi[(mi - gap > 0) & (mi > mi_lo)]
        ms = mi - gap
        w = mi * mi / (s2 + mi * mi)
        d = w * np.log1p(gap / ms) - (1.0 - w) * np.log1p(mi * gap / s2)
        val = float(np.max(gap / d))
        best = max(best, val)
    return best


@dataclass
class ApproxReport:
    max_rel_error: float
    argmax_z: float
    errors: np.ndarray


def verify_approx(z_grid: np.ndarray | None = None, refined: bool = False,
                  gaps: np.ndarray | None = None) -> ApproxReport:
    """Max relative deviation of the approximation from the grid supremum."""
    if z_grid is None:
        z_grid = np.logspace(-3, 3, 241)
    approx = lower_bound_approx_refined if refined else lower_bound_approx
    errs = np.array([lower_bound_sup(float(z), gaps) / approx(float(z)) - 1.0 for z in z_grid])
    j = int(np.argmax(np.abs(errs)))
    return ApproxReport(float(abs(errs[j])), float(z_grid[j]), errs)


# --- auxiliary closed forms ----------------------------------------------------

def max_linear_log_quadratic(a: float, b: float, c: float) -> float:
    """max_{y >= 0} a y + b log y - c y^2 for a, b, c > 0."""
    if not (a > 0 and b > 0 and c > 0):
        raise DomainError("need a, b, c > 0")
    r = a + math.sqrt(a * a + 8.0 * b * c)
    return 0.5 * (a * r / (4.0 * c) - b) + b * math.log(r / (4.0 * c))


def running_mean_hints(losses: Sequence[float]) -> np.ndarray:
    """m(t) = (1/2 + sum_{s<t} l(s)) / t for t = 1..T."""
    seq = np.asarray(losses, dtype=np.float64)
    prefix = np.concatenate([[0.0], np.cumsum(seq)[:-1]])
    return (0.5 + prefix) / np.arange(1, seq.size + 1)


def hint_excess_loss(losses: Sequence[float], m_star: np.ndarray) -> np.ndarray:
    """sum_t (l(t) - m(t))^2 - (l(t) - m*)^2 for each comparator m*."""
    seq = np.asarray(losses, dtype=np.float64)
    m = running_mean_hints(seq)
    own = float(np.sum((seq - m) ** 2))
    ms = np.asarray(m_star, dtype=np.float64)
    comp = np.sum(seq ** 2) - 2.0 * ms * seq.sum() + seq.size * ms ** 2
    return own - comp
