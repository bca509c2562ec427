"""Independent reference computations used by the tests.

Nothing here imports the package: formulas are transcribed directly and
optimisation is done by brute force or golden-section search.
"""
import math

import numpy as np

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def golden_max(f, lo, hi, iters=200):
    """Maximum of a unimodal f on [lo, hi]."""
    a, b = lo, hi
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return max(fc, fd)


def golden_max_log(f, lo=-40.0, hi=40.0):
    """Maximum of f(y) over y > 0, searched over s = log y."""
    return golden_max(lambda s: f(math.exp(s)), lo, hi)


def phi_ref(x, gamma):
    x = np.asarray(x, dtype=np.float64)
    ent = np.where(x < 1.0, (1.0 - x) * np.log(np.where(x < 1.0, 1.0 - x, 1.0)), 0.0)
    return x - 1.0 - np.log(x) + gamma * (x + ent)


def ftrl_objective(L, betas, gamma, P):
    """<L, p> + sum_i beta_i phi(p_i) for each row p of P."""
    P = np.atleast_2d(P)
    return P @ np.asarray(L) + (np.asarray(betas) * phi_ref(P, gamma)).sum(axis=1)


def grid_min_simplex(L, betas, gamma, coarse=1e-2, target=1e-6):
    """Brute-force minimiser over the simplex for K = 2 or 3.

    A full grid at ``coarse`` spacing locates the basin; windows of +-5 steps
    are then re-gridded at 10x finer spacing (re-centred until the best point
    is interior to the window) down to ``target``.
    """
    k = len(L)
    if k not in (2, 3):
        raise ValueError("grid oracle supports K = 2 or 3")

    def points(centre, step, radius):
        offs = np.arange(-radius, radius + 1) * step
        if k == 2:
            x = centre[0] + offs
            P = np.stack([x, 1.0 - x], axis=1)
        else:
            a, b = np.meshgrid(centre[0] + offs, centre[1] + offs, indexing="ij")
            a, b = a.ravel(), b.ravel()
            P = np.stack([a, b, 1.0 - a - b], axis=1)
        return P[np.all((P > 0) & (P < 1), axis=1)]

    step = coarse
    n = int(round(1.0 / step))
    P = points(np.full(k, 0.5), step, n)
    best = P[np.argmin(ftrl_objective(L, betas, gamma, P))]
    while True:
        for _ in range(50):
            P = points(best, step, 5)
            cand = P[np.argmin(ftrl_objective(L, betas, gamma, P))]
            moved = not np.allclose(cand, best, atol=step / 4)
            best = cand
            if not moved:
                break
        if step <= target * 1.0001:
            return best
        step /= 10.0


def lower_simple_denominator(mu_star, mu_i, s2):
    w = mu_i ** 2 / (s2 + mu_i ** 2)
    return w * math.log(mu_i / mu_star) + (1.0 - w) * math.log(s2 / (s2 + mu_i * (mu_i - mu_star)))


def naive_v1(m):
    total = 0.0
    for t in range(len(m) - 1):
        for i in range(len(m[t])):
            total += abs(m[t][i] - m[t + 1][i])
    return total


def naive_c(a, b):
    return sum(max(abs(x - y) for x, y in zip(ra, rb)) for ra, rb in zip(a, b))
