"""Green's-function annuli, density diagnostics, criterion sums and regularity.

All functions take a :class:`~markov_traps.exact.GreensMap`, i.e. g(x0, .) on
a finite set of states, and never claim anything about the infinite chain:
the criterion sum is reported as partial sums plus a growth classification.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DensityError

__all__ = [
    "Annulus",
    "CriterionSeries",
    "RegularityReport",
    "build_annulus",
    "geometric_annuli",
    "annulus_density",
    "density_scan",
    "criterion_partial_sums",
    "set_contributions",
    "classify_growth",
    "regularity_check",
    "sample_pairs",
]

BY_GREENS = "greens_descending"
BY_NORM = "norm_ascending"


@dataclass(frozen=True, eq=False)
class Annulus:
    """States x with ``L >= g(x0, x) >= alpha * L`` (or ``> alpha * L`` if half-open)."""

    level: float
    alpha: float
    members: np.ndarray
    half_open: bool = False
    edge_contaminated: bool = False

    def __len__(self):
        return self.members.size


def build_annulus(greens_map, L, alpha, half_open=False):
    """Exact filter of ``greens_map`` at level ``L`` and ratio ``alpha``.

    An empty result is a valid annulus.  It is marked edge-contaminated when
    ``L`` is within a factor 4 of the smallest positive truncated Green's
    value, where truncation effects dominate.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not L > 0:
        raise ValueError("L must be positive")
    g = greens_map.values
    lower = L * alpha
    m = (g <= L) & ((g > lower) if half_open else (g >= lower))
    pos = g[g > 0]
    edge = bool(pos.size) and bool(L <= 4.0 * pos.min())
    return Annulus(float(L), float(alpha), greens_map.codes[m], half_open, edge)


def geometric_annuli(greens_map, alpha=0.5, top=None, half_open=True):
    """Annuli at levels ``top, top*alpha, top*alpha**2, ...`` down past the
    smallest positive value.  ``top`` defaults to the largest value of the map.

    With ``half_open`` the annuli partition the states of positive value.
    """
    pos = greens_map.values[greens_map.values > 0]
    if pos.size == 0:
        return []
    L = float(pos.max() if top is None else top)
    floor = pos.min()
    out = []
    while True:
        out.append(build_annulus(greens_map, L, alpha, half_open=half_open))
        if L * alpha < floor:
            break
        L = L * alpha
    return out


def annulus_density(annulus, predicate):
    """``|H ∩ A| / |H|`` for a nonempty annulus ``H`` and set ``A``."""
    if len(annulus) == 0:
        raise DensityError("density of an empty annulus is undefined")
    return float(np.count_nonzero(predicate.contains(annulus.members)) / len(annulus))


def density_scan(greens_map, predicate, alpha=0.5, top=None):
    """``[(level, size, density, edge_contaminated), ...]`` over geometric levels."""
    rows = []
    for ann in geometric_annuli(greens_map, alpha, top, half_open=True):
        if len(ann):
            rows.append((ann.level, len(ann), annulus_density(ann, predicate), ann.edge_contaminated))
    return rows


@dataclass(frozen=True, eq=False)
class CriterionSeries:
    ordering: str
    partial_sums: np.ndarray
    terms_counted: int
    growth: str
    log_slope: float

    @property
    def total(self):
        return float(self.partial_sums[-1]) if self.partial_sums.size else 0.0


def classify_growth(partial_sums):
    """Classify a nondecreasing sequence as bounded-trend, log-growth or power-growth.

    Looks at the second half of the index range on a log scale: less than 5%
    relative increase there is bounded; otherwise the mean log-log exponent
    separates power growth (>= 0.25) from logarithmic growth.  Returns the
    class and the least-squares slope of the partial sums against log(k).
    """
    s = np.asarray(partial_sums, dtype=np.float64)
    K = s.size
    if K < 4 or s[-1] <= 0:
        return "bounded-trend", 0.0
    k = np.arange(1, K + 1)
    mid = max(int(np.sqrt(K)) - 1, 0)
    tail = slice(mid, K)
    slope = float(np.polyfit(np.log(k[tail]), s[tail], 1)[0])
    if (s[-1] - s[mid]) / s[-1] < 0.05 or s[mid] <= 0:
        return "bounded-trend", slope
    exponent = np.log(s[-1] / s[mid]) / np.log(K / (mid + 1))
    return ("power-growth" if exponent >= 0.25 else "log-growth"), slope


def criterion_partial_sums(greens_map, field, ordering=BY_GREENS):
    """Cumulative sums of g(x0, x) q(x) in a deterministic order.

    ``ordering`` is ``"greens_descending"`` or ``"norm_ascending"`` (chain
    norm of x); ties break by code.  Only positive terms are counted.
    """
    codes, g = greens_map.codes, greens_map.values
    terms = g * field.values(codes)
    if ordering == BY_GREENS:
        order = np.lexsort((codes, -g))
    elif ordering == BY_NORM:
        order = np.lexsort((codes, greens_map.chain.norm(codes)))
    else:
        raise ValueError(f"unknown ordering {ordering!r}")
    terms = terms[order]
    terms = terms[terms > 0]
    sums = np.cumsum(terms) if terms.size else np.zeros(1)
    growth, slope = classify_growth(sums)
    return CriterionSeries(ordering, sums, int(terms.size), growth, slope)


def set_contributions(greens_map, field, predicates):
    """``sum_{x in A} g(x0, x) q(x)`` over the map's states, for each set ``A``."""
    terms = greens_map.values * field.values(greens_map.codes)
    return np.array([float(np.sum(terms[p.contains(greens_map.codes)])) for p in predicates])


@dataclass(frozen=True, eq=False)
class RegularityReport:
    C: float
    C_prime: float
    n_checked: int
    violations: list
    min_C_prime: float

    @property
    def passed(self):
        return not self.violations


def sample_pairs(greens_map, n_pairs=None, seed=0):
    """Index pairs into the positive part of ``greens_map``.

    All unordered pairs when ``n_pairs`` is None, else ``n_pairs`` random ones.
    """
    n = int(np.count_nonzero(greens_map.values > 0))
    if n_pairs is None:
        i, j = np.triu_indices(n, k=1)
        return np.stack([i, j], axis=1)
    rng = np.random.default_rng(seed)
    return rng.integers(0, n, size=(int(n_pairs), 2))


def regularity_check(greens_map, field, C, C_prime, pairs=None, max_violations=1000):
    """Scan pairs for failures of the implication

        g(x0,x)/C <= g(x0,y) <= C g(x0,x)  =>  q(x)/C' <= q(y) <= C' q(x).

    ``pairs`` index the positive part of the map (see :func:`sample_pairs`).
    ``min_C_prime`` is the smallest C' for which the scanned pairs all pass.
    """
    if not (C > 1 and C_prime > 1):
        raise ValueError("C and C' must exceed 1")
    codes, g = greens_map.positive()
    q = field.values(codes)
    if pairs is None:
        pairs = sample_pairs(greens_map)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    i, j = pairs[:, 0], pairs[:, 1]
    premise = (g[j] * C >= g[i]) & (g[j] <= C * g[i])
    i, j = i[premise], j[premise]
    qi, qj = q[i], q[j]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where((qi == 0) & (qj == 0), 1.0, np.maximum(qi / qj, qj / qi))
    ratio = np.where(np.isnan(ratio), np.inf, ratio)
    bad = np.flatnonzero(ratio > C_prime)
    decode = greens_map.chain.decode
    violations = [
        (decode(codes[i[b]]), decode(codes[j[b]]), float(g[i[b]]), float(g[j[b]]), float(qi[b]), float(qj[b]))
        for b in bad[:max_violations]
    ]
    return RegularityReport(float(C), float(C_prime), int(premise.sum()), violations,
                            float(ratio.max()) if ratio.size else 1.0)
