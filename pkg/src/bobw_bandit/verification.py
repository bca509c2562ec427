"""Numeric-claim suite behind ``bobw-bandit verify``.

Each check reports the measured maximum next to its threshold. Closed forms
are compared with bounded Brent maximization from scipy, run on a log scale
so that the search interval covers many orders of magnitude.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from . import theory
from .solver import max_compentropy_gap, max_logbarrier_gap


@dataclass
class CheckResult:
    name: str
    measured: float
    threshold: float
    passed: bool
    seconds: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return (f"{status} {self.name}: measured={self.measured:.6g} "
                f"threshold={self.threshold:.6g} [{self.seconds:.2f}s]{extra}")


def _maximize_log_scale(fn, lo: float, hi: float) -> float:
    """max of fn(exp(s)) for s in [lo, hi]; fn must be unimodal in s."""
    res = minimize_scalar(lambda s: -fn(math.exp(s)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-11, "maxiter": 500})
    return -float(res.fun)


def numeric_logbarrier(a: float, x: float) -> float:
    """max_y a(x - y) - (y/x - 1 - log(y/x)) over y > 0."""
    return _maximize_log_scale(lambda r: a * x * (1.0 - r) - (r - 1.0 - math.log(r)), -40.0, 40.0)


def numeric_compentropy(a: float, x: float) -> float:
    """max_y a(x - y) - D(y, x) for psi(y) = (1-y) log(1-y) + y, over y < 1."""
    w0 = 1.0 - x

    def value(w: float) -> float:
        # w = 1 - y; the Bregman term in w is w log(w / w0) - w + w0
        return a * (w - w0) - (w * math.log(w / w0) - w + w0)

    return _maximize_log_scale(value, math.log(w0) - 40.0, math.log(w0) + 40.0)


def numeric_linear_log_quadratic(a: float, b: float, c: float) -> float:
    return _maximize_log_scale(lambda y: a * y + b * math.log(y) - c * y * y, -40.0, 40.0)


def _timed(name: str, threshold: float, fn) -> CheckResult:
    start = time.perf_counter()
    measured, detail = fn()
    return CheckResult(name, measured, threshold, bool(measured <= threshold),
                       time.perf_counter() - start, detail)


def check_approx(threshold: float = 0.06, refined: bool = False) -> CheckResult:
    def run():
        rep = theory.verify_approx(refined=refined)
        return rep.max_rel_error, f"argmax z={rep.argmax_z:.4g}"
    return _timed("lower_bound_approx_refined" if refined else "lower_bound_approx", threshold, run)


def check_h_envelope(eps: float = 0.2, c: float = 4.2, points: int = 10_000) -> CheckResult:
    def run():
        b0 = 2.0 * (1.0 + eps)
        excess = max(theory.h_of_z(float(z), eps) - max(4.0 * z + c * math.log1p(z), b0)
                     for z in np.logspace(-3, 3, points))
        return excess, f"eps={eps}, c={c}, {points} points; measured = max(h - envelope)"
    return _timed("h_envelope", 1e-12, run)


def check_moment_equivalence(instances: int = 10_000, seed: int = 0) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(instances):
            mu_star, mu_i, s2 = random_moment_instance(rng)
            M1 = 1.0 - mu_i
            raw = theory.dinf2_raw(M1, M1 * M1 + s2, 1.0 - mu_star)
            worst = max(worst, abs(raw - theory.lower_bound_denominator(mu_star, mu_i, s2)))
        return worst, f"{instances} instances"
    return _timed("moment_form_equivalence", 1e-9, run)


def random_moment_instance(rng: np.random.Generator) -> tuple[float, float, float]:
    """(mu*, mu_i, sigma^2) with 0 < mu* < mu_i < 1 and 0 < sigma^2 <= mu_i(1-mu_i)."""
    mu_star, mu_i = np.sort(rng.uniform(0.01, 0.99, size=2))
    while mu_i - mu_star < 1e-3:
        mu_star, mu_i = np.sort(rng.uniform(0.01, 0.99, size=2))
    s2 = rng.uniform(0.01, 1.0) * mu_i * (1.0 - mu_i)
    return float(mu_star), float(mu_i), float(s2)


def check_divergence_maxima(draws: int = 1000, seed: int = 1) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0.01, 0.99, draws)
    # a ranges from near the -1/x pole up to a moderate positive value
    a_lb = -1.0 / xs + rng.uniform(0.05, 20.0, draws)
    a_ce = rng.uniform(-5.0, 5.0, draws)

    def run_lb():
        err = max(abs(max_logbarrier_gap(a, x) - numeric_logbarrier(a, x)) for a, x in zip(a_lb, xs))
        return err, f"{draws} draws"

    def run_ce():
        err = max(abs(max_compentropy_gap(a, x) - numeric_compentropy(a, x)) for a, x in zip(a_ce, xs))
        return err, f"{draws} draws"

    return [_timed("logbarrier_maximum", 1e-6, run_lb), _timed("compentropy_maximum", 1e-6, run_ce)]


def check_linear_log_quadratic(draws: int = 1000, seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    abc = np.exp(rng.uniform(math.log(0.01), math.log(10.0), size=(draws, 3)))

    def run():
        err = max(abs(theory.max_linear_log_quadratic(a, b, c) - numeric_linear_log_quadratic(a, b, c))
                  for a, b, c in abc)
        return err, f"{draws} draws"
    return _timed("linear_log_quadratic_maximum", 1e-6, run)


def run_suite(approx_threshold: float = 0.06, refined_threshold: float = 0.006,
              equivalence_instances: int = 10_000, oracle_draws: int = 1000) -> list[CheckResult]:
    return [
        check_approx(approx_threshold),
        check_approx(refined_threshold, refined=True),
        check_h_envelope(),
        check_moment_equivalence(equivalence_instances),
        *check_divergence_maxima(oracle_draws),
        check_linear_log_quadratic(oracle_draws),
    ]
