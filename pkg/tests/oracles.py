"""Independent reference computations used to freeze expected values.

None of these touch the simulation engine or the truncation solvers.
"""

from itertools import product

import numpy as np


def lazy_line_law(x0, horizon, n_max=None):
    """Distribution of X_horizon for the lazy line started at x0 (forward DP)."""
    n_max = n_max or x0 + horizon + 1
    sites = np.arange(x0, n_max + 1)
    up = 1.0 / sites
    p = np.zeros(sites.size)
    p[0] = 1.0
    for _ in range(horizon):
        moved = p * up
        p = p - moved
        p[1:] += moved[:-1]
    return sites, p


def lazy_line_quenched_survival(x0, horizon, q):
    """E[prod_{n=x0}^{X_h} (1 - q(n))]: the chain never revisits, so quenched
    survival to time h only depends on the furthest site reached."""
    sites, p = lazy_line_law(x0, horizon, n_max=x0 + min(horizon, 4000) + 1)
    surv = np.cumprod(1.0 - q(sites))
    return float((p * surv).sum())


def lazy_line_annealed_survival(x0, horizon, q, n_max=None):
    """P(no fresh trap at any time 0..h): forward recursion of the killed kernel."""
    n_max = n_max or x0 + min(horizon, 4000) + 1
    sites = np.arange(x0, n_max + 1)
    keep = 1.0 - q(sites)
    up = 1.0 / sites
    w = np.zeros(sites.size)
    w[0] = keep[0]
    for _ in range(horizon):
        moved = w * up
        w = w - moved
        w[1:] += moved[:-1]
        w *= keep
    return float(w.sum())


def per_site_annealed_factor(n, qn):
    """Probability the lazy line leaves site n before a fresh trap fires there."""
    return ((1 - qn) / n) / (1 - (1 - qn) * (1 - 1 / n))


def enumerate_quenched(P, q, x0, horizon):
    """Quenched trapping probability by brute force over all paths of length
    ``horizon`` and all trap configurations (tiny instances only)."""
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    m = P.shape[0]
    total = 0.0
    for traps in product((False, True), repeat=m):
        traps = np.array(traps)
        w = np.prod(np.where(traps, q, 1 - q))
        if w == 0:
            continue
        # sum over paths, stopping at the first trap visit
        caught = 0.0
        stack = [(x0, 1.0, 0)]
        while stack:
            x, pr, t = stack.pop()
            if traps[x]:
                caught += pr
                continue
            if t == horizon:
                continue
            for y in range(m):
                if P[x, y] > 0:
                    stack.append((y, pr * P[x, y], t + 1))
        total += w * caught
    return total
