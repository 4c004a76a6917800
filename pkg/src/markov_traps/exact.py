"""Exact computations on finite truncations of a chain.

A :class:`Truncation` is a finite set of interior states.  Mass that leaves
it is killed; the boundary mode decides what value the killed mass carries
in the annealed fixed point (0: no trapping outside, giving a lower bracket
for the trapping probability; 1: certain trapping outside, an upper one).
Green's functions computed on a truncation are componentwise lower bounds of
the untruncated ones and increase with the truncation.
"""

import warnings
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from itertools import product

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import integrate, special
from scipy.sparse.csgraph import breadth_first_order

from .exceptions import ConvergenceError, SolverError

__all__ = [
    "KILLED_ZERO",
    "KILLED_ONE",
    "Truncation",
    "GreensMap",
    "PiMap",
    "DiagReport",
    "restricted_kernel",
    "greens_exact",
    "greens_diag_bound_check",
    "lattice_greens",
    "lattice_greens_map",
    "pi_annealed_fixedpoint",
    "pi_annealed_bracket",
    "level_set",
    "pi_quenched_bruteforce",
    "SurvivalBracket",
    "survival_exact",
]

KILLED_ZERO = "killed_zero"
KILLED_ONE = "killed_one"
_BOUNDARY_VALUE = {KILLED_ZERO: 0.0, KILLED_ONE: 1.0}


@dataclass(frozen=True, eq=False)
class Truncation:
    """Finite, canonically ordered set of interior states containing ``x0``."""

    chain: object
    codes: np.ndarray
    x0: int
    boundary_mode: str = KILLED_ZERO
    label: str = ""

    def __post_init__(self):
        codes = np.unique(np.asarray(self.codes, dtype=np.int64))
        object.__setattr__(self, "codes", codes)
        if self.boundary_mode not in _BOUNDARY_VALUE:
            raise ValueError(f"boundary_mode must be one of {sorted(_BOUNDARY_VALUE)}")
        if self.index(self.x0) is None:
            raise ValueError("x0 must belong to the truncation")

    @classmethod
    def ball(cls, chain, x0, radius, boundary_mode=KILLED_ZERO):
        """States within ``radius`` of ``x0`` in the chain's own ball geometry."""
        return cls(chain, chain.ball(x0, radius), chain.encode(x0), boundary_mode, f"ball(r={radius})")

    @classmethod
    def from_states(cls, chain, states, x0, boundary_mode=KILLED_ZERO):
        return cls(chain, chain.encode_many(states), chain.encode(x0), boundary_mode, f"explicit(n={len(states)})")

    def with_boundary(self, boundary_mode):
        return Truncation(self.chain, self.codes, self.x0, boundary_mode, self.label)

    @property
    def boundary_value(self):
        return _BOUNDARY_VALUE[self.boundary_mode]

    def __len__(self):
        return self.codes.size

    def index(self, code):
        i = int(np.searchsorted(self.codes, code))
        if i < self.codes.size and self.codes[i] == code:
            return i
        return None

    def states(self):
        return [self.chain.decode(c) for c in self.codes]


def restricted_kernel(trunc):
    """Kernel restricted to the truncation.

    Returns ``(P_in, p_out)``: the sparse interior-to-interior kernel and the
    probability of leaving the truncation in one step from each state.
    """
    codes = trunc.codes
    n = codes.size
    src, dst, p = trunc.chain.kernel(codes)
    pos = np.searchsorted(codes, dst)
    inside = pos < n
    inside[inside] = codes[pos[inside]] == dst[inside]
    P_in = sp.csr_matrix((p[inside], (src[inside], pos[inside])), shape=(n, n))
    p_out = np.bincount(src[~inside], weights=p[~inside], minlength=n)
    return P_in, p_out


@dataclass(eq=False)
class GreensMap:
    """g(x0, .) on a finite set of states (zero elsewhere)."""

    chain: object
    x0: int
    codes: np.ndarray
    values: np.ndarray
    provenance: dict = dc_field(default_factory=dict)

    def get_codes(self, codes):
        codes = np.asarray(codes, dtype=np.int64)
        pos = np.clip(np.searchsorted(self.codes, codes), 0, max(self.codes.size - 1, 0))
        hit = self.codes[pos] == codes if self.codes.size else np.zeros(codes.shape, bool)
        return np.where(hit, self.values[pos], 0.0)

    def get(self, state):
        return float(self.get_codes(np.array([self.chain.encode(state)]))[0])

    def positive(self):
        """``(codes, values)`` restricted to strictly positive entries."""
        m = self.values > 0
        return self.codes[m], self.values[m]

    def to_dict(self):
        return {self.chain.decode(c): float(v) for c, v in zip(self.codes, self.values)}


def _reachable(P, start):
    order = breadth_first_order(P, start, directed=True, return_predecessors=False)
    mask = np.zeros(P.shape[0], dtype=bool)
    mask[order] = True
    return mask


def _can_escape(P, p_out):
    """States from which the killed boundary is reachable."""
    n = P.shape[0]
    # virtual sink n fed by every state with positive escape mass
    exits = np.flatnonzero(p_out > 0)
    G = sp.bmat([[P, sp.csr_matrix((np.ones(exits.size), (exits, np.zeros(exits.size, int))), shape=(n, 1))],
                 [sp.csr_matrix((1, n)), sp.csr_matrix((1, 1))]]).tocsr()
    return _reachable(G.T.tocsr(), n)[:n]


def greens_exact(chain, trunc, x0=None):
    """Green's function from ``x0`` of the chain killed on leaving ``trunc``.

    Solves g(x0, y) = 1{y = x0} + sum_x g(x0, x) p(x, y) over the states
    reachable from ``x0`` inside the truncation.
    """
    x0c = trunc.x0 if x0 is None else chain.encode(x0)
    i0 = trunc.index(x0c)
    if i0 is None:
        raise ValueError("x0 is not in the truncation")
    P, p_out = restricted_kernel(trunc)
    reach = _reachable(P, i0)
    idx = np.flatnonzero(reach)
    Pr = P[idx][:, idx]
    stuck = ~_can_escape(Pr, p_out[idx])
    if stuck.any():
        bad = [chain.decode(c) for c in trunc.codes[idx[stuck]][:5]]
        raise SolverError(
            f"killed kernel is stochastic on {int(stuck.sum())} reachable states "
            f"(no escape; Green's function infinite), e.g. {bad}"
        )
    b = np.zeros(idx.size)
    b[np.searchsorted(idx, i0)] = 1.0
    A = (sp.identity(idx.size, format="csc") - Pr.T.tocsc()).tocsc()
    g = spla.spsolve(A, b) if idx.size > 1 else b / A.toarray()[0, 0]
    if not np.all(np.isfinite(g)):
        raise SolverError("Green's function solve produced non-finite values")
    values = np.zeros(trunc.codes.size)
    values[idx] = np.maximum(g, 0.0)
    return GreensMap(chain, x0c, trunc.codes, values,
                     {"truncation": trunc.label, "n_states": len(trunc), "method": "sparse-direct"})


@lru_cache(maxsize=None)
def _lattice_greens_sorted(coords):
    d = len(coords)

    def f(t):
        out = 1.0
        for c in coords:
            out *= special.ive(c, t / d)
        return out

    r2 = sum(c * c for c in coords)
    split = max(10.0, 2.0 * r2)
    # ive returns nan past ~1e9, so integrate to T and add the asymptotic tail,
    # using ive(c, z) ~ (2 pi z)^(-1/2) (1 - (4c^2 - 1) / (8z)) in each factor
    T = max(1e6, 1e4 * split)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        head, _ = integrate.quad(f, 0.0, split, limit=400, epsabs=1e-14, epsrel=1e-12)
        mid, _ = integrate.quad(f, split, T, limit=400, epsabs=1e-14, epsrel=1e-12)
    k = d * sum(4 * c * c - 1 for c in coords) / 8.0
    far = (d / (2 * np.pi)) ** (d / 2) * (T ** (1 - d / 2) / (d / 2 - 1) - k * T ** (-d / 2) / (d / 2))
    return head + mid + far


def lattice_greens(x):
    """Green's function g(0, x) of simple random walk on the full lattice Z^d, d >= 3.

    Uses g(0, x) = int_0^inf prod_i exp(-t/d) I_{x_i}(t/d) dt, the time integral
    of the rate-1 continuous-time walk's transition probability.
    """
    coords = tuple(sorted(abs(int(c)) for c in x))
    if len(coords) < 3:
        raise ValueError("the walk is recurrent for d < 3; g is infinite")
    return _lattice_greens_sorted(coords)


def lattice_greens_map(chain, codes):
    """:class:`GreensMap` of the full-lattice g(0, .) on the given codes of a
    :class:`~markov_traps.chains.SimpleWalkZd` with d >= 3."""
    codes = np.unique(np.asarray(codes, dtype=np.int64))
    vals = np.array([lattice_greens(c) for c in chain.coords(codes)])
    return GreensMap(chain, chain.encode((0,) * chain.d), codes, vals,
                     {"truncation": "none", "n_states": int(codes.size), "method": "lattice-bessel-integral"})


@dataclass(frozen=True)
class DiagReport:
    states: list
    values: np.ndarray
    max_value: float
    trend: str
    slope: float


def greens_diag_bound_check(chain, sample_states, radius):
    """Truncated lower bounds on g(x, x) at each sample state.

    Each value is computed on a ball of ``radius`` around that state.  The
    trend is ``"unbounded-trend"`` when the diagonal grows with the state size
    (log-log slope above 1/2 and a spread over a factor 2) or exceeds the
    chain's declared bound, ``"bounded"`` otherwise.
    """
    states = list(sample_states)
    vals = np.array([
        greens_exact(chain, Truncation.ball(chain, x, radius)).get(x) for x in states
    ])
    sizes = chain.norm(chain.encode_many(states))
    slope = 0.0
    if len(states) >= 2 and np.ptp(np.log1p(sizes)) > 0:
        slope = float(np.polyfit(np.log1p(sizes), np.log(vals), 1)[0])
    grows = slope > 0.5 and vals.max() > 2.0 * vals.min()
    over = chain.green_diag_bound is not None and vals.max() > chain.green_diag_bound * (1 + 1e-9)
    return DiagReport(states, vals, float(vals.max()), "unbounded-trend" if grows or over else "bounded", slope)


@dataclass(eq=False)
class PiMap:
    """Annealed trapping probability on a truncation, as a lower or upper bracket."""

    chain: object
    field: object
    trunc: Truncation
    values: np.ndarray
    bracket: str
    sweeps: int
    method: str

    @property
    def codes(self):
        return self.trunc.codes

    @property
    def boundary_value(self):
        return self.trunc.boundary_value

    def at(self, state):
        i = self.trunc.index(self.chain.encode(state))
        if i is None:
            raise KeyError(state)
        return float(self.values[i])

    def residual(self):
        """|pi(x) - q(x) - (1 - q(x)) E_x pi(X_1)| at every interior state."""
        P, p_out = restricted_kernel(self.trunc)
        q = self.field.values(self.trunc.codes)
        rhs = q + (1.0 - q) * (P @ self.values + self.boundary_value * p_out)
        return np.abs(self.values - rhs)

    def level_set_codes(self, a):
        return self.trunc.codes[self.values >= a]


def pi_annealed_fixedpoint(chain, field, trunc, method="sweep", tol=1e-12, max_sweeps=10**6):
    """Annealed trapping probability on ``trunc`` from the one-step identity

        pi(x) = q(x) + (1 - q(x)) E_x pi(X_1),

    with ``pi`` fixed at the boundary value outside the truncation.

    ``method="sweep"`` iterates the map (Jacobi order) from the constant-0
    start until the sup-norm change is at most ``tol``; the iterates increase
    monotonically to the minimal fixed point.  ``method="direct"`` solves the
    same linear system with a sparse LU factorization.

    With ``killed_zero`` the result is a lower bracket for the untruncated
    value, with ``killed_one`` an upper bracket.  Starting the upper iteration
    from the constant 1 would stall immediately (1 is always a fixed point),
    so both brackets start from 0.
    """
    if field.chain != chain:
        raise ValueError("field is bound to a different chain")
    P, p_out = restricted_kernel(trunc)
    q = field.values(trunc.codes)
    a = 1.0 - q
    base = q + a * trunc.boundary_value * p_out
    M = sp.diags(a) @ P
    bracket = "lower" if trunc.boundary_mode == KILLED_ZERO else "upper"
    if method == "direct":
        A = (sp.identity(len(trunc), format="csc") - M).tocsc()
        v = spla.spsolve(A, base) if len(trunc) > 1 else base / A.toarray()[0, 0]
        if not np.all(np.isfinite(v)):
            raise SolverError("fixed-point system is singular (closed class with q = 0)")
        return PiMap(chain, field, trunc, np.clip(v, 0.0, 1.0), bracket, 0, method)
    if method != "sweep":
        raise ValueError(f"unknown method {method!r}")
    M = M.tocsr()
    v = np.zeros(len(trunc))
    for sweep in range(1, int(max_sweeps) + 1):
        new = base + M @ v
        change = float(np.max(np.abs(new - v))) if v.size else 0.0
        v = new
        if change <= tol:
            break
    else:
        raise ConvergenceError(
            f"no convergence after {max_sweeps} sweeps (last change {change:.3g})",
            residual=change, sweeps=max_sweeps,
        )
    return PiMap(chain, field, trunc, np.clip(v, 0.0, 1.0), bracket, sweep, method)


def pi_annealed_bracket(chain, field, trunc, **kw):
    """``(lower, upper)`` brackets on the same interior states."""
    lo = pi_annealed_fixedpoint(chain, field, trunc.with_boundary(KILLED_ZERO), **kw)
    hi = pi_annealed_fixedpoint(chain, field, trunc.with_boundary(KILLED_ONE), **kw)
    return lo, hi


def level_set(pi, a):
    """States with stored value >= ``a``, in canonical order."""
    return [pi.chain.decode(c) for c in pi.level_set_codes(a)]


def _trap_probability(P, trap, i0, horizon):
    """P(hit ``trap`` by ``horizon``) from index ``i0``; leaving the state set never traps."""
    n = P.shape[0]
    if horizon is not None:
        alive = np.zeros(n)
        alive[i0] = 1.0
        caught = 0.0
        for t in range(horizon + 1):
            caught += alive[trap].sum()
            alive[trap] = 0.0
            if t < horizon:
                alive = alive @ P
        return caught
    if trap[i0]:
        return 1.0
    # minimal solution: states that cannot reach a trap get 0
    reach = _can_escape(sp.csr_matrix(P * (~trap)[:, None]), (P[:, trap].sum(axis=1)) * (~trap))
    free = np.flatnonzero(reach & ~trap)
    if i0 not in set(free):
        return 0.0
    A = np.eye(free.size) - P[np.ix_(free, free)]
    b = P[np.ix_(free, np.flatnonzero(trap))].sum(axis=1)
    h = np.linalg.solve(A, b)
    return float(h[np.searchsorted(free, i0)])


def pi_quenched_bruteforce(chain, field, states, x0, horizon=None, max_states=20):
    """Quenched trapping probability by enumerating every trap configuration.

    Each subset T of the sites with q > 0 is weighted by
    prod_{x in T} q(x) prod_{x not in T} (1 - q(x)); the chance of hitting T
    (by ``horizon``, or ever when ``horizon`` is None) comes from the kernel
    restricted to ``states``.  Leaving ``states`` counts as never trapped.
    """
    states = list(states)
    if len(states) > max_states:
        raise ValueError(f"brute force refuses {len(states)} states (limit {max_states}): 2^n configurations")
    trunc = Truncation.from_states(chain, states, x0)
    P = restricted_kernel(trunc)[0].toarray()
    q = field.values(trunc.codes)
    i0 = trunc.index(trunc.x0)
    support = np.flatnonzero(q > 0)
    total = 0.0
    for bits in product((False, True), repeat=support.size):
        bits = np.array(bits, dtype=bool)
        w = float(np.prod(np.where(bits, q[support], 1.0 - q[support])))
        if w == 0.0 or not bits.any():
            continue
        trap = np.zeros(len(trunc), dtype=bool)
        trap[support[bits]] = True
        total += w * _trap_probability(P, trap, i0, None if horizon is None else int(horizon))
    return total


@dataclass(frozen=True)
class SurvivalBracket:
    """Exact survival to a finite horizon on a truncation.

    ``escaped`` is the mass that left the truncation alive; ``lower`` counts
    it as trapped, ``upper`` as surviving.
    """

    horizon: int
    lower: float
    upper: float
    escaped: float
    mode: str


def survival_exact(chain, field, trunc, horizon, mode="annealed"):
    """P(no trapping at times 0..horizon) by forward recursion of the killed kernel.

    Annealed: every step at x multiplies by 1 - q(x).  Quenched is exact only
    for chains that never return to a state after leaving it; there the factor
    1 - q(y) applies on entering a new state y.
    """
    if mode not in ("quenched", "annealed"):
        raise ValueError(f"mode must be 'quenched' or 'annealed', got {mode!r}")
    if mode == "quenched" and chain.revisits:
        raise ValueError("exact quenched recursion needs a chain without revisits")
    horizon = int(horizon)
    P, p_out = restricted_kernel(trunc)
    keep = 1.0 - field.values(trunc.codes)
    PT = P.T.tocsr()
    if mode == "quenched":
        diag = P.diagonal()
        off = (P - sp.diags(diag)).T.tocsr()
    w = np.zeros(len(trunc))
    i0 = trunc.index(trunc.x0)
    w[i0] = keep[i0]
    escaped = 0.0
    for _ in range(horizon):
        escaped += float(w @ p_out)
        if mode == "annealed":
            w = (PT @ w) * keep
        else:
            w = diag * w + (off @ w) * keep
    alive = float(w.sum())
    return SurvivalBracket(horizon, alive, alive + escaped, escaped, mode)
