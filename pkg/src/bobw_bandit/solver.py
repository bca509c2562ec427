"""Log-barrier plus complementary-entropy regularizer and its FTRL solve.

The per-coordinate potential is

    phi(x) = x - 1 - log x + gamma * (x + (1 - x) log(1 - x)),

and one round of optimistic FTRL returns the minimiser of
``<L, p> + sum_i beta_i phi(p_i)`` over the simplex. The solve goes through
the stationarity conditions ``L_i + beta_i phi'(p_i) + lam = 0``: each
``p_i(lam)`` inverts the strictly increasing ``phi'`` and ``lam`` is then
root-found so that the coordinates sum to one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .core import ConvergenceFailure, DomainError, ProbabilityVector

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class RegularizerParams:
    gamma: float
    betas: np.ndarray

    def __post_init__(self) -> None:
        betas = np.array(self.betas, dtype=np.float64)
        betas.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        # policies always pass gamma = log T >= log 55; standalone solves only
        # need a positive weight on the complementary entropy
        if not (math.isfinite(self.gamma) and self.gamma > 0.0):
            raise DomainError(f"gamma must be positive, got {self.gamma}")
        if betas.ndim != 1 or not np.all(np.isfinite(betas)) or np.any(betas < 1.0):
            raise DomainError("every beta must be finite and >= 1")


@dataclass(frozen=True)
class SolverReport:
    solution: ProbabilityVector
    lagrange_multiplier: float
    kkt_residual: float
    iterations: int


def _check_open(x: float, upper_closed: bool) -> None:
    ok = x > 0 and (x <= 1 if upper_closed else x < 1)
    if not (math.isfinite(x) and ok):
        raise DomainError(f"argument {x!r} outside the domain")


def phi(x: float, gamma: float) -> float:
    """Regularizer component; ``phi(1) == gamma`` by continuity."""
    _check_open(x, upper_closed=True)
    entropy = 0.0 if x == 1.0 else (1.0 - x) * math.log1p(-x)
    return x - 1.0 - math.log(x) + gamma * (x + entropy)


def phi_prime(x: float, gamma: float) -> float:
    _check_open(x, upper_closed=False)
    return float(_kernels.phi_prime(x, gamma))


def phi_second(x: float, gamma: float) -> float:
    _check_open(x, upper_closed=False)
    return 1.0 / (x * x) + gamma / (1.0 - x)


def potential(p: Sequence[float], params: RegularizerParams) -> float:
    """psi(p) = sum_i beta_i phi(p_i)."""
    return sum(b * phi(float(x), params.gamma) for b, x in zip(params.betas, p))


def objective(shifted_cumulative_loss: Sequence[float], p: Sequence[float],
              params: RegularizerParams) -> float:
    return float(np.dot(shifted_cumulative_loss, p)) + potential(p, params)


def solve_oftrl(
    shifted_cumulative_loss: Sequence[float],
    params: RegularizerParams,
    tol: float = DEFAULT_TOL,
    warm_start: Sequence[float] | None = None,
    warm_multiplier: float | None = None,
) -> SolverReport:
    """Minimise ``<L, p> + psi(p)`` over the simplex.

    ``shifted_cumulative_loss`` is ``m(t) + sum_{s<t} lhat(s)``. A warm start
    (previous round's distribution and multiplier) changes only the iterate
    path, never the solution beyond ``tol``.

    Raises:
        DomainError: non-finite input or mismatched lengths.
        ConvergenceFailure: the iteration budget ran out before the KKT
            residual dropped below ``tol``.
    """
    loss = np.ascontiguousarray(shifted_cumulative_loss, dtype=np.float64)
    if loss.ndim != 1 or loss.size != params.betas.size:
        raise DomainError("loss vector and betas must have the same length")
    if not np.all(np.isfinite(loss)):
        raise DomainError("non-finite cumulative loss")
    if not tol > 0:
        raise DomainError("tol must be positive")
    k = loss.size
    warm = np.full(k, 1.0 / k) if warm_start is None else np.asarray(warm_start, dtype=np.float64)
    lam0 = math.nan if warm_multiplier is None else float(warm_multiplier)
    p, lam, residual, iters, status = _kernels.solve_oftrl_kernel(
        loss, np.ascontiguousarray(params.betas), float(params.gamma), float(tol), warm, lam0)
    if status == _kernels.BAD_INPUT:
        raise DomainError("invalid solver input")
    if status != _kernels.OK:
        raise ConvergenceFailure(
            f"OFTRL solve stopped after {iters} outer iterations, residual {residual:.3g}")
    return SolverReport(ProbabilityVector(p), float(lam), float(residual), int(iters))


def kkt_residual(shifted_cumulative_loss: Sequence[float], params: RegularizerParams,
                 p: Sequence[float], multiplier: float) -> float:
    """Max stationarity violation plus the simplex-sum violation."""
    return float(_kernels.kkt_residual_kernel(
        np.asarray(shifted_cumulative_loss, dtype=np.float64), np.asarray(params.betas),
        float(params.gamma), np.asarray(p, dtype=np.float64), float(multiplier)))


def max_logbarrier_gap(a: float, x: float) -> float:
    """max_y {a (x - y) - D(y, x)} for the Bregman divergence of -log y.

    Equals ``g(a x)`` with ``g(u) = u - log(1 + u)``.
    """
    if not (math.isfinite(a) and 0 < x < 1):
        raise DomainError("need finite a and x in (0, 1)")
    if a < -1.0 / x:
        raise DomainError(f"a must be >= -1/x = {-1.0 / x}")
    u = a * x
    if u == -1.0:
        return math.inf
    return u - math.log1p(u)


def max_compentropy_gap(a: float, x: float) -> float:
    """Same maximum for the complementary entropy (1 - y) log(1 - y).

    Equals ``(1 - x) h(a)`` with ``h(u) = exp(u) - u - 1``.
    """
    if not (math.isfinite(a) and 0 < x < 1):
        raise DomainError("need finite a and x in (0, 1)")
    return (1.0 - x) * (math.expm1(a) - a)


def bregman(q: ProbabilityVector, p: ProbabilityVector, params: RegularizerParams) -> float:
    """Bregman divergence of psi between two interior points."""
    qv, pv = np.asarray(q, dtype=np.float64), np.asarray(p, dtype=np.float64)
    if qv.shape != pv.shape or qv.size != params.betas.size:
        raise DomainError("dimension mismatch")
    if np.any(qv <= 0) or np.any(qv >= 1) or np.any(pv <= 0) or np.any(pv >= 1):
        raise DomainError("Bregman divergence needs interior points")
    g = params.gamma
    total = 0.0
    for b, qi, pi in zip(params.betas, qv, pv):
        total += b * (phi(qi, g) - phi(pi, g) - phi_prime(pi, g) * (qi - pi))
    return max(total, 0.0)
