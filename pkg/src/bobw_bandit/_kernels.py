"""Compiled per-round kernels.

Both the Python policy classes and the whole-trial loops call these, so a
trial run through the fast path reproduces the class-driven trajectory bit
for bit.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

P_MIN = 1e-12
SUM_TARGET = 1e-14
MAX_OUTER = 200
MAX_INNER = 100

# status codes returned by the solvers
OK = 0
NO_CONVERGENCE = 1
BAD_INPUT = 2

# diagnostic slots filled by the trial loops in assertion mode
DIAG_MAX_KKT = 0
DIAG_MIN_P = 1
DIAG_MAX_SUM_ERR = 2
DIAG_MAX_BETA_REC_ERR = 3
DIAG_BETA_DECREASES = 4
DIAG_ALPHA_OUT_OF_RANGE = 5
DIAG_P_NOT_INTERIOR = 6
DIAG_MAX_ALPHA = 7
DIAG_SIZE = 8


@njit(cache=True)
def phi_prime(x, gamma):
    return 1.0 - 1.0 / x - gamma * math.log1p(-x)


@njit(cache=True)
def phi_second(x, gamma):
    return 1.0 / (x * x) + gamma / (1.0 - x)


@njit(cache=True)
def inverse_phi_prime(target, gamma, x0):
    """Solve phi'(x) = target on (P_MIN, 1 - P_MIN).

    Safeguarded Newton; bisection falls back to the geometric midpoint when
    the bracket spans several orders of magnitude.
    """
    lo = P_MIN
    hi = 1.0 - P_MIN
    if phi_prime(lo, gamma) >= target:
        return lo, 0
    if phi_prime(hi, gamma) <= target:
        return hi, 0
    x = x0
    if not (lo < x < hi):
        x = 1.0 / (1.0 - target) if target < 0.0 else 0.5
    for it in range(1, MAX_INNER + 1):
        f = phi_prime(x, gamma) - target
        if f == 0.0:
            return x, it
        if f > 0.0:
            hi = x
        else:
            lo = x
        x_new = x - f / phi_second(x, gamma)
        if not (lo < x_new < hi):
            if hi > 4.0 * lo:
                x_new = math.sqrt(lo * hi)
            else:
                x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 4e-16 * x or hi - lo <= 4e-16 * hi:
            return x_new, it
        x = x_new
    return x, -1


@njit(cache=True)
def _fill_p(shifted, betas, gamma, lam, p, p_warm):
    total = 0.0
    deriv = 0.0
    worst = 0
    for i in range(shifted.size):
        x, it = inverse_phi_prime(-(shifted[i] + lam) / betas[i], gamma, p_warm[i])
        if it < 0:
            worst = -1
        elif worst >= 0 and it > worst:
            worst = it
        p[i] = x
        total += x
        deriv -= 1.0 / (betas[i] * phi_second(x, gamma))
    return total, deriv, worst


@njit(cache=True)
def solve_oftrl_kernel(cum_loss, betas, gamma, tol, p_warm, lam_warm):
    """Minimise <L, p> + sum_i beta_i phi(p_i) over the simplex.

    ``lam_warm`` is a multiplier for the *unshifted* problem (NaN for none).
    Returns (p, lam, residual, iterations, status).
    """
    k = cum_loss.size
    p = np.empty(k)
    for i in range(k):
        if not (math.isfinite(cum_loss[i]) and math.isfinite(betas[i])) or betas[i] <= 0.0:
            return p, math.nan, math.inf, 0, BAD_INPUT
    if not (gamma > 0.0 and math.isfinite(gamma)):
        return p, math.nan, math.inf, 0, BAD_INPUT
    shift = cum_loss.min()
    shifted = cum_loss - shift
    pk = phi_prime(1.0 / k, gamma)
    lam_lo = math.inf
    lam_hi = -math.inf
    for i in range(k):
        c = -shifted[i] - betas[i] * pk
        lam_lo = min(lam_lo, c)
        lam_hi = max(lam_hi, c)
    # sum p(lam) is decreasing: >= 1 at lam_lo, <= 1 at lam_hi
    # L_i + beta_i phi'(p_i) + lam = 0 becomes (L_i - shift) + ... + (lam + shift) = 0
    lam = lam_warm + shift
    if not (lam_lo <= lam <= lam_hi):
        lam = 0.5 * (lam_lo + lam_hi)
    pw = p_warm.copy()
    iters = 0
    status = NO_CONVERGENCE
    for outer in range(1, MAX_OUTER + 1):
        iters = outer
        total, deriv, inner = _fill_p(shifted, betas, gamma, lam, p, pw)
        if inner < 0:
            break
        f = total - 1.0
        if abs(f) <= SUM_TARGET:
            status = OK
            break
        if f > 0.0:
            lam_lo = lam
        else:
            lam_hi = lam
        lam_new = lam - f / deriv
        if not (lam_lo < lam_new < lam_hi):
            lam_new = 0.5 * (lam_lo + lam_hi)
        if lam_new == lam or lam_hi - lam_lo <= 4e-16 * max(1.0, abs(lam)):
            total, deriv, inner = _fill_p(shifted, betas, gamma, lam_new, p, pw)
            lam = lam_new
            status = OK if inner >= 0 else NO_CONVERGENCE
            break
        lam = lam_new
        for i in range(k):
            pw[i] = p[i]
    residual = kkt_residual_kernel(shifted, betas, gamma, p, lam)
    if status == OK and not residual <= tol:
        status = NO_CONVERGENCE
    return p, lam - shift, residual, iters, status


@njit(cache=True)
def kkt_residual_kernel(cum_loss, betas, gamma, p, lam):
    worst = 0.0
    total = 0.0
    for i in range(p.size):
        if not (0.0 < p[i] < 1.0):
            return math.inf
        r = abs(cum_loss[i] + betas[i] * phi_prime(p[i], gamma) + lam)
        if r > worst:
            worst = r
        total += p[i]
    return worst + abs(total - 1.0)


@njit(cache=True)
def tsallis_solve_kernel(cum_loss, eta):
    """1/2-Tsallis FTRL: w_i = 4 / (eta (L_i - x))^2 with sum w = 1.

    Newton on s = min(L) - x from the left of the root, where the map is
    convex and decreasing, so iterates increase monotonically.
    """
    k = cum_loss.size
    shifted = cum_loss - cum_loss.min()
    s = 2.0 / eta
    s_max = 2.0 * math.sqrt(k) / eta
    w = np.empty(k)
    for it in range(MAX_OUTER):
        total = 0.0
        deriv = 0.0
        for i in range(k):
            d = eta * (shifted[i] + s)
            w[i] = 4.0 / (d * d)
            total += w[i]
            deriv -= 8.0 * eta / (d * d * d)
        f = total - 1.0
        if abs(f) <= SUM_TARGET:
            break
        s_new = s - f / deriv
        if s_new <= s or s_new > s_max:
            break
        s = s_new
    total = 0.0
    for i in range(k):
        total += w[i]
    for i in range(k):
        w[i] /= total
    return w


@njit(cache=True)
def sample_arm(p, u):
    c = 0.0
    for i in range(p.size):
        c += p[i]
        if u < c:
            return i
    return p.size - 1


@njit(cache=True)
def bobw_estimate(hint, p, arm, observed):
    est = hint.copy()
    est[arm] = hint[arm] + (observed - hint[arm]) / p[arm]
    return est


@njit(cache=True)
def bobw_alpha(hint_arm, p_arm, observed, gamma):
    err = observed - hint_arm
    return err * err * min(1.0, 2.0 * (1.0 - p_arm) / (p_arm * p_arm * gamma))


@njit(cache=True)
def bobw_update_kernel(cum_est, hint, counts, loss_sums, alpha_sums, betas,
                       p, arm, observed, gamma, beta0, ewma_eta):
    """In-place round update; returns the alpha increment of ``arm``."""
    k = hint.size
    a = bobw_alpha(hint[arm], p[arm], observed, gamma)
    for i in range(k):
        if i != arm:
            cum_est[i] += hint[i]
    cum_est[arm] += hint[arm] + (observed - hint[arm]) / p[arm]
    alpha_sums[arm] += a
    betas[arm] = math.sqrt(beta0 * beta0 + alpha_sums[arm] / gamma)
    counts[arm] += 1
    loss_sums[arm] += observed
    if ewma_eta > 0.0:
        hint[arm] = (1.0 - ewma_eta) * hint[arm] + ewma_eta * observed
    else:
        hint[arm] = (0.5 + loss_sums[arm]) / (1.0 + counts[arm])
    return a


@njit(cache=True)
def run_bobw_trial(losses, uniforms, epsilon, gamma, ewma_eta, tol, check):
    """Whole trial of the proposed policy on a precomputed loss matrix."""
    horizon, k = losses.shape
    beta0 = 1.0 + epsilon
    cum_est = np.zeros(k)
    hint = np.full(k, 0.5)
    counts = np.zeros(k, dtype=np.int64)
    loss_sums = np.zeros(k)
    alpha_sums = np.zeros(k)
    betas = np.full(k, beta0)
    p_warm = np.full(k, 1.0 / k)
    lam = math.nan
    arms = np.empty(horizon, dtype=np.int64)
    probs = np.empty((horizon, k)) if check else np.empty((0, k))
    diag = np.zeros(DIAG_SIZE)
    diag[DIAG_MIN_P] = 1.0
    for t in range(horizon):
        p, lam, res, _, status = solve_oftrl_kernel(hint + cum_est, betas, gamma, tol, p_warm, lam)
        if status != OK:
            raise RuntimeError("OFTRL solve failed")
        arm = sample_arm(p, uniforms[t])
        arms[t] = arm
        obs = losses[t, arm]
        if check:
            probs[t] = p
            diag[DIAG_MAX_KKT] = max(diag[DIAG_MAX_KKT], res)
            s = 0.0
            for i in range(k):
                s += p[i]
                if not (0.0 < p[i] < 1.0):
                    diag[DIAG_P_NOT_INTERIOR] += 1
                diag[DIAG_MIN_P] = min(diag[DIAG_MIN_P], p[i])
            diag[DIAG_MAX_SUM_ERR] = max(diag[DIAG_MAX_SUM_ERR], abs(s - 1.0))
        old_beta = betas[arm]
        a = bobw_update_kernel(cum_est, hint, counts, loss_sums, alpha_sums, betas,
                               p, arm, obs, gamma, beta0, ewma_eta)
        if check:
            if not (0.0 <= a <= 1.0):
                diag[DIAG_ALPHA_OUT_OF_RANGE] += 1
            diag[DIAG_MAX_ALPHA] = max(diag[DIAG_MAX_ALPHA], a)
            if betas[arm] < old_beta:
                diag[DIAG_BETA_DECREASES] += 1
            rec = abs(betas[arm] ** 2 - old_beta ** 2 - a / gamma) / max(1.0, old_beta ** 2)
            diag[DIAG_MAX_BETA_REC_ERR] = max(diag[DIAG_MAX_BETA_REC_ERR], rec)
        p_warm = p
    return arms, probs, diag, alpha_sums, counts


@njit(cache=True)
def run_tsallis_trial(losses, uniforms, reduced_variance):
    horizon, k = losses.shape
    cum = np.zeros(k)
    arms = np.empty(horizon, dtype=np.int64)
    for t in range(horizon):
        eta = tsallis_eta(t + 1, reduced_variance)
        w = tsallis_solve_kernel(cum, eta)
        arm = sample_arm(w, uniforms[t])
        arms[t] = arm
        tsallis_accumulate(cum, w, arm, losses[t, arm], eta, reduced_variance)
    return arms


@njit(cache=True)
def tsallis_eta(round_, reduced_variance):
    if reduced_variance:
        return 1.0 / math.sqrt(round_)
    return 2.0 / math.sqrt(round_)


@njit(cache=True)
def tsallis_accumulate(cum, w, arm, observed, eta, reduced_variance):
    if reduced_variance:
        for i in range(w.size):
            b = 0.5 if w[i] >= eta * eta else 0.0
            cum[i] += b
            if i == arm:
                cum[i] += (observed - b) / w[i]
    else:
        cum[arm] += observed / w[arm]


@njit(cache=True)
def ucb_index_arm(means, variances, counts, round_, zeta, variance_aware):
    """Loss-convention lower-confidence index; unpulled arms first."""
    k = means.size
    for i in range(k):
        if counts[i] == 0:
            return i
    log_t = math.log(round_)
    best = 0
    best_val = math.inf
    for i in range(k):
        n = counts[i]
        if variance_aware:
            val = means[i] - math.sqrt(2.0 * variances[i] * zeta * log_t / n) - 3.0 * zeta * log_t / n
        else:
            val = means[i] - math.sqrt(2.0 * log_t / n)
        if val < best_val:
            best_val = val
            best = i
    return best


@njit(cache=True)
def ucb_accumulate(sums, sq_sums, counts, means, variances, arm, observed):
    counts[arm] += 1
    sums[arm] += observed
    sq_sums[arm] += observed * observed
    n = counts[arm]
    means[arm] = sums[arm] / n
    variances[arm] = max(0.0, sq_sums[arm] / n - means[arm] * means[arm])


@njit(cache=True)
def run_ucb_trial(losses, zeta, variance_aware):
    horizon, k = losses.shape
    sums = np.zeros(k)
    sq_sums = np.zeros(k)
    counts = np.zeros(k, dtype=np.int64)
    means = np.zeros(k)
    variances = np.zeros(k)
    arms = np.empty(horizon, dtype=np.int64)
    for t in range(horizon):
        arm = ucb_index_arm(means, variances, counts, t + 1, zeta, variance_aware)
        arms[t] = arm
        ucb_accumulate(sums, sq_sums, counts, means, variances, arm, losses[t, arm])
    return arms


@njit(cache=True)
def run_uniform_trial(k, uniforms):
    p = np.full(k, 1.0 / k)
    arms = np.empty(uniforms.size, dtype=np.int64)
    for t in range(uniforms.size):
        arms[t] = sample_arm(p, uniforms[t])
    return arms


@njit(cache=True)
def q_infty_value_and_subgradient(losses, center):
    horizon, k = losses.shape
    value = 0.0
    grad = np.zeros(k)
    for t in range(horizon):
        best = -1.0
        arg = 0
        for i in range(k):
            d = abs(losses[t, i] - center[i])
            if d > best:
                best = d
                arg = i
        value += best * best
        grad[arg] -= 2.0 * (losses[t, arg] - center[arg])
    return value, grad
