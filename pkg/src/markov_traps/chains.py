"""Markov chains on countable state spaces with finite per-state support.

Every chain maps its natural states (integers, lattice tuples, tree paths) to
canonical nonnegative ``int64`` codes.  Codes are bijective on the encodable
part of the state space and their integer order is the canonical state order
used for deterministic iteration.  The simulation and linear-algebra code work
on code arrays; the scalar methods (:meth:`Chain.transitions`,
:meth:`Chain.encode`, :meth:`Chain.decode`) are the user-facing surface.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EncodingError

__all__ = [
    "Chain",
    "LazyLine",
    "DeterministicDrift",
    "SimpleWalkZd",
    "DriftTree",
    "TreeWithChains",
    "FiniteChain",
    "PathSample",
    "transitions",
    "sample_path",
    "first_visit_flags",
    "tree_with_chains_classify",
]


def _bit_length(v):
    """Vectorized ``int.bit_length`` for nonnegative int64 arrays."""
    v = np.asarray(v, dtype=np.int64)
    n = np.zeros(v.shape, dtype=np.int64)
    w = v.copy()
    for s in (32, 16, 8, 4, 2, 1):
        m = w >= (1 << s)
        n[m] += s
        w[m] >>= s
    return n + (w > 0)


def _as_int(x, what):
    if isinstance(x, (bool, np.bool_)) or not isinstance(x, (int, np.integer)):
        raise EncodingError(f"{what} must be an integer, got {x!r}")
    return int(x)


class Chain:
    """Base class for a transition kernel with finite support per state.

    Subclasses implement :meth:`encode`, :meth:`decode` and the vectorized
    :meth:`kernel`.  :meth:`stay_prob` and :meth:`jump` default to generic
    implementations derived from :meth:`kernel` and should be overridden for
    speed on chains that are simulated over long horizons.
    """

    kind = "chain"
    #: known constant K with g(x, x) <= K for all x, or None
    green_diag_bound = None
    #: some state has p(x, x) > 0
    has_self_loops = False
    #: a path can return to a state after leaving it
    revisits = True

    # -- encoding ---------------------------------------------------------
    def encode(self, state):
        raise NotImplementedError

    def decode(self, code):
        raise NotImplementedError

    def encode_many(self, states):
        return np.array([self.encode(s) for s in states], dtype=np.int64)

    # -- kernel -----------------------------------------------------------
    def kernel(self, codes):
        """All transitions out of ``codes``.

        Returns ``(src, dst, prob)`` where ``src`` indexes into ``codes``,
        ``dst`` holds target codes and ``prob`` the positive probabilities.
        """
        raise NotImplementedError

    def stay_prob(self, codes):
        codes = np.asarray(codes, dtype=np.int64)
        src, dst, p = self.kernel(codes)
        loop = dst == codes[src]
        return np.bincount(src[loop], weights=p[loop], minlength=codes.size)

    def jump(self, codes, rng):
        """Sample one move per code from the kernel conditioned on leaving.

        Codes whose state is absorbing (p(x, x) = 1) are returned unchanged.
        """
        codes = np.asarray(codes, dtype=np.int64)
        out = codes.copy()
        src, dst, p = self.kernel(codes)
        keep = dst != codes[src]
        src, dst, p = src[keep], dst[keep], p[keep]
        u = rng.random(codes.size)
        if src.size == 0:
            return out
        tot = np.bincount(src, weights=p, minlength=codes.size)
        # src is nondecreasing by construction of kernel()
        cum = np.cumsum(p)
        start = np.searchsorted(src, np.arange(codes.size))
        base = np.where(start > 0, cum[np.maximum(start - 1, 0)], 0.0)
        thresh = base + u * tot
        pos = np.searchsorted(cum, thresh, side="right")
        end = np.searchsorted(src, np.arange(codes.size), side="right")
        pos = np.minimum(pos, end - 1)
        ok = tot > 0
        out[ok] = dst[pos[ok]]
        return out

    def check_horizon(self, code, horizon):
        """Raise :class:`EncodingError` if a path from ``code`` could leave the
        encodable range within ``horizon`` steps."""

    def norm(self, codes):
        """Size of a state (distance-like); used by radial fields and orderings."""
        return np.asarray(codes, dtype=np.float64)

    def ball(self, center, radius):
        """Sorted codes of states reachable from ``center`` in at most ``radius`` steps."""
        start = self.encode(center)
        seen = {start}
        frontier = [start]
        for _ in range(int(radius)):
            if not frontier:
                break
            _, dst, _ = self.kernel(np.array(frontier, dtype=np.int64))
            frontier = [int(d) for d in np.unique(dst) if int(d) not in seen]
            seen.update(frontier)
        return np.array(sorted(seen), dtype=np.int64)

    # -- scalar surface ---------------------------------------------------
    def transitions(self, state):
        """``[(state, probability), ...]`` sorted by canonical code."""
        code = self.encode(state)
        _, dst, p = self.kernel(np.array([code], dtype=np.int64))
        order = np.argsort(dst, kind="stable")
        return [(self.decode(int(dst[i])), float(p[i])) for i in order]

    def __repr__(self):
        return f"{type(self).__name__}()"


class _LineChain(Chain):
    start = 0
    _limit = 1 << 62

    def encode(self, state):
        n = _as_int(state, "line state")
        if not self.start <= n < self._limit:
            raise EncodingError(f"{self.kind} states are integers >= {self.start}, got {n}")
        return n

    def decode(self, code):
        return int(code)

    def check_horizon(self, code, horizon):
        if code + horizon >= self._limit:
            raise EncodingError("horizon exceeds the encodable range")

    def ball(self, center, radius):
        c = self.encode(center)
        lo = max(self.start, c - int(radius))
        return np.arange(lo, c + int(radius) + 1, dtype=np.int64)

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(type(self))


class LazyLine(_LineChain):
    """Lazy chain on {2, 3, ...}: p(n, n+1) = 1/n, p(n, n) = 1 - 1/n.

    The diagonal Green's function is g(n, n) = n, so no uniform bound exists.
    """

    kind = "lazy_line"
    start = 2
    has_self_loops = True
    revisits = False

    def kernel(self, codes):
        codes = np.asarray(codes, dtype=np.int64)
        k = codes.size
        up = 1.0 / codes
        src = np.repeat(np.arange(k), 2)
        dst = np.empty(2 * k, dtype=np.int64)
        dst[0::2] = codes
        dst[1::2] = codes + 1
        p = np.empty(2 * k)
        p[0::2] = 1.0 - up
        p[1::2] = up
        return src, dst, p

    def stay_prob(self, codes):
        return 1.0 - 1.0 / np.asarray(codes, dtype=np.float64)

    def jump(self, codes, rng):
        return np.asarray(codes, dtype=np.int64) + 1


class DeterministicDrift(_LineChain):
    """Deterministic motion n -> n+1 on {0, 1, 2, ...}; never revisits."""

    kind = "drift"
    start = 0
    green_diag_bound = 1.0
    revisits = False

    def kernel(self, codes):
        codes = np.asarray(codes, dtype=np.int64)
        return np.arange(codes.size), codes + 1, np.ones(codes.size)

    def stay_prob(self, codes):
        return np.zeros(np.shape(codes))

    def jump(self, codes, rng):
        return np.asarray(codes, dtype=np.int64) + 1


class SimpleWalkZd(Chain):
    """Simple random walk on Z^d.

    States are ``d``-tuples; codes pack each coordinate into ``63 // d`` bits
    with an offset, so coordinates must satisfy ``|x_i| < 2**(63 // d - 1)``.
    """

    kind = "zd"

    def __init__(self, d=3):
        d = _as_int(d, "dimension")
        if not 1 <= d <= 8:
            raise ValueError(f"dimension must be in 1..8, got {d}")
        self.d = d
        self._bits = 63 // d
        self._offset = 1 << (self._bits - 1)
        self._mask = (1 << self._bits) - 1
        shifts = [1 << (self._bits * i) for i in range(d)]
        # neighbour offsets in code space, ordered -e_1, +e_1, -e_2, ...
        self._steps = np.array([s * sgn for s in shifts for sgn in (-1, 1)], dtype=np.int64)
        self._shifts = np.array([self._bits * i for i in range(d)], dtype=np.int64)
        if d >= 3:
            from .exact import lattice_greens

            self.green_diag_bound = lattice_greens((0,) * d)

    def __eq__(self, other):
        return isinstance(other, SimpleWalkZd) and other.d == self.d

    def __hash__(self):
        return hash(("zd", self.d))

    def __repr__(self):
        return f"SimpleWalkZd(d={self.d})"

    def __getstate__(self):
        return {"d": self.d}

    def __setstate__(self, state):
        self.__init__(state["d"])

    def encode(self, state):
        try:
            coords = tuple(state)
        except TypeError:
            raise EncodingError(f"Z^{self.d} state must be a {self.d}-tuple, got {state!r}") from None
        if len(coords) != self.d:
            raise EncodingError(f"Z^{self.d} state must have {self.d} coordinates, got {state!r}")
        code = 0
        for i, c in enumerate(coords):
            c = _as_int(c, "coordinate")
            if not -self._offset < c < self._offset:
                raise EncodingError(f"coordinate {c} outside encodable range")
            code |= (c + self._offset) << (self._bits * i)
        return code

    def decode(self, code):
        code = int(code)
        return tuple(((code >> (self._bits * i)) & self._mask) - self._offset for i in range(self.d))

    def coords(self, codes):
        """``(n, d)`` integer coordinates of an array of codes."""
        codes = np.asarray(codes, dtype=np.int64)
        return ((codes[..., None] >> self._shifts) & self._mask) - self._offset

    def from_coords(self, coords):
        coords = np.asarray(coords, dtype=np.int64)
        if np.any(np.abs(coords) >= self._offset):
            raise EncodingError("coordinate outside encodable range")
        return ((coords + self._offset) << self._shifts).sum(axis=-1)

    def kernel(self, codes):
        codes = np.asarray(codes, dtype=np.int64)
        m = self._steps.size
        src = np.repeat(np.arange(codes.size), m)
        dst = (codes[:, None] + self._steps[None, :]).ravel()
        return src, dst, np.full(dst.size, 1.0 / m)

    def stay_prob(self, codes):
        return np.zeros(np.shape(codes))

    def jump(self, codes, rng):
        return np.asarray(codes, dtype=np.int64) + self._steps[rng.integers(0, self._steps.size, np.size(codes))]

    def check_horizon(self, code, horizon):
        if np.abs(self.decode(code)).max() + horizon >= self._offset:
            raise EncodingError("horizon exceeds the encodable coordinate range")

    def norm(self, codes):
        return np.sqrt((self.coords(codes).astype(np.float64) ** 2).sum(axis=-1))

    def ball(self, center, radius):
        """Sorted codes of lattice points within Euclidean distance ``radius``."""
        c = np.asarray(self.decode(self.encode(center)), dtype=np.int64)
        r = int(np.floor(radius))
        ax = np.arange(-r, r + 1)
        grid = np.stack(np.meshgrid(*([ax] * self.d), indexing="ij"), axis=-1).reshape(-1, self.d)
        grid = grid[(grid.astype(np.float64) ** 2).sum(axis=1) <= radius * radius]
        return np.sort(self.from_coords(grid + c))


class DriftTree(Chain):
    """Walk on the rooted binary tree that always steps to a uniform child.

    States are tuples of bits giving the root-to-node path (root = ``()``);
    codes are heap indices (root 1, children ``2v`` and ``2v + 1``).
    """

    kind = "drift_tree"
    green_diag_bound = 1.0
    revisits = False
    max_generation = 62

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(type(self))

    def encode(self, state):
        try:
            bits = tuple(state)
        except TypeError:
            raise EncodingError(f"tree state must be a tuple of bits, got {state!r}") from None
        if len(bits) > self.max_generation:
            raise EncodingError("tree generation exceeds the encodable range")
        v = 1
        for b in bits:
            if b not in (0, 1):
                raise EncodingError(f"tree path entries must be 0/1, got {b!r}")
            v = 2 * v + int(b)
        return v

    def decode(self, code):
        code = int(code)
        if code < 1:
            raise EncodingError(f"invalid tree code {code}")
        return tuple(int(c) for c in bin(code)[3:])

    def generation(self, codes):
        return _bit_length(codes) - 1

    def kernel(self, codes):
        codes = np.asarray(codes, dtype=np.int64)
        src = np.repeat(np.arange(codes.size), 2)
        dst = np.empty(2 * codes.size, dtype=np.int64)
        dst[0::2] = 2 * codes
        dst[1::2] = 2 * codes + 1
        return src, dst, np.full(dst.size, 0.5)

    def stay_prob(self, codes):
        return np.zeros(np.shape(codes))

    def jump(self, codes, rng):
        return 2 * np.asarray(codes, dtype=np.int64) + rng.integers(0, 2, np.size(codes))

    def check_horizon(self, code, horizon):
        if int(code).bit_length() - 1 + horizon > self.max_generation:
            raise EncodingError("horizon exceeds the encodable tree depth")

    def norm(self, codes):
        return self.generation(codes).astype(np.float64)


class TreeWithChains(Chain):
    """Simple random walk on a binary tree with a hanging chain at each vertex.

    Every tree vertex ``v`` in generation ``n > 0`` carries an appended chain
    of ``n`` extra vertices.  A state is ``(bits, k)``: ``bits`` the root path
    of ``v`` and ``k`` the position along its chain (``k = 0`` is ``v`` itself,
    ``k = n`` the chain end).  Codes are ``(heap_index << 6) | k``.
    """

    kind = "tree_with_chains"
    max_generation = 56
    _KBITS = 6

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(type(self))

    def encode(self, state):
        try:
            bits, k = state
            bits = tuple(bits)
        except (TypeError, ValueError):
            raise EncodingError(f"state must be (bits, offset), got {state!r}") from None
        k = _as_int(k, "chain offset")
        n = len(bits)
        if n > self.max_generation:
            raise EncodingError("tree generation exceeds the encodable range")
        if not 0 <= k <= n:
            raise EncodingError(f"offset {k} invalid for a generation-{n} vertex")
        v = 1
        for b in bits:
            if b not in (0, 1):
                raise EncodingError(f"tree path entries must be 0/1, got {b!r}")
            v = 2 * v + int(b)
        return (v << self._KBITS) | k

    def decode(self, code):
        code = int(code)
        v, k = code >> self._KBITS, code & ((1 << self._KBITS) - 1)
        if v < 1 or k > v.bit_length() - 1:
            raise EncodingError(f"invalid code {code}")
        return tuple(int(c) for c in bin(v)[3:]), k

    def split(self, codes):
        """Vectorized ``(heap_index, offset, generation)``."""
        codes = np.asarray(codes, dtype=np.int64)
        v = codes >> self._KBITS
        k = codes & ((1 << self._KBITS) - 1)
        return v, k, _bit_length(v) - 1

    def kernel(self, codes):
        v, k, gen = self.split(codes)
        K = self._KBITS
        src, dst, p = [], [], []
        idx = np.arange(v.size)
        # root: two children
        m = (k == 0) & (gen == 0)
        for child in (2 * v[m], 2 * v[m] + 1):
            src.append(idx[m]); dst.append(child << K); p.append(np.full(m.sum(), 0.5))
        # other tree vertices: parent, two children, first chain vertex
        m = (k == 0) & (gen > 0)
        for t in ((v[m] >> 1) << K, (2 * v[m]) << K, (2 * v[m] + 1) << K, (v[m] << K) | 1):
            src.append(idx[m]); dst.append(t); p.append(np.full(m.sum(), 0.25))
        # chain interior: back and forward
        m = (k > 0) & (k < gen)
        for t in ((v[m] << K) | (k[m] - 1), (v[m] << K) | (k[m] + 1)):
            src.append(idx[m]); dst.append(t); p.append(np.full(m.sum(), 0.5))
        # chain end: back only
        m = (k > 0) & (k == gen)
        src.append(idx[m]); dst.append((v[m] << K) | (k[m] - 1)); p.append(np.ones(m.sum()))
        src = np.concatenate(src)
        order = np.argsort(src, kind="stable")
        return src[order], np.concatenate(dst)[order], np.concatenate(p)[order]

    def stay_prob(self, codes):
        return np.zeros(np.shape(codes))

    def jump(self, codes, rng):
        v, k, gen = self.split(codes)
        K = self._KBITS
        u = rng.random(v.size)
        out = np.empty(v.size, dtype=np.int64)
        root = (k == 0) & (gen == 0)
        out[root] = (2 * v[root] + (u[root] >= 0.5)) << K
        tree = (k == 0) & (gen > 0)
        choice = np.minimum((u[tree] * 4).astype(np.int64), 3)
        vt = v[tree]
        out[tree] = np.select(
            [choice == 0, choice == 1, choice == 2],
            [(vt >> 1) << K, (2 * vt) << K, (2 * vt + 1) << K],
            (vt << K) | 1,
        )
        chain = k > 0
        fwd = (u[chain] >= 0.5) & (k[chain] < gen[chain])
        out[chain] = (v[chain] << K) | (k[chain] + np.where(fwd, 1, -1))
        if np.any(gen[tree] >= self.max_generation):
            raise EncodingError("walk left the encodable tree depth")
        return out

    def norm(self, codes):
        _, k, gen = self.split(codes)
        return (gen + k).astype(np.float64)

    def classify(self, state):
        """``("tree-interior", None)``, ``("chain-interior", None)`` or ``("chain-end", n)``."""
        bits, k = self.decode(self.encode(state))
        n = len(bits)
        if k == 0:
            return ("tree-interior", None)
        if k == n:
            return ("chain-end", n)
        return ("chain-interior", None)


class FiniteChain(Chain):
    """Explicit kernel on states ``0 .. m-1`` given by a row-stochastic matrix.

    Intended for desk-scale oracle instances.
    """

    kind = "finite"

    def __init__(self, matrix):
        P = np.array(matrix, dtype=np.float64)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("transition matrix must be square")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("transition matrix must be nonnegative with unit row sums")
        self.P = P
        self.P.setflags(write=False)
        self.m = P.shape[0]
        self.has_self_loops = bool(np.any(np.diag(P) > 0))
        off = P.copy()
        np.fill_diagonal(off, 0.0)
        tot = off.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            self._jump_cdf = np.where(tot > 0, np.cumsum(off, axis=1) / tot, 1.0)
        self._jump_cdf[:, -1] = 1.0

    def __eq__(self, other):
        return isinstance(other, FiniteChain) and np.array_equal(self.P, other.P)

    def __hash__(self):
        return hash(self.P.tobytes())

    def __repr__(self):
        return f"FiniteChain(m={self.m})"

    def encode(self, state):
        i = _as_int(state, "finite-chain state")
        if not 0 <= i < self.m:
            raise EncodingError(f"state {i} outside 0..{self.m - 1}")
        return i

    def decode(self, code):
        return int(code)

    def kernel(self, codes):
        codes = np.asarray(codes, dtype=np.int64)
        rows = self.P[codes]
        src, dst = np.nonzero(rows)
        return src, dst.astype(np.int64), rows[src, dst]

    def stay_prob(self, codes):
        return np.diag(self.P)[np.asarray(codes, dtype=np.int64)]

    def jump(self, codes, rng):
        codes = np.asarray(codes, dtype=np.int64)
        u = rng.random(codes.size)
        nxt = (u[:, None] >= self._jump_cdf[codes]).sum(axis=1)
        absorbing = np.diag(self.P)[codes] >= 1.0
        return np.where(absorbing, codes, np.minimum(nxt, self.m - 1))


def transitions(chain, x):
    """Positive transition probabilities out of ``x``, ordered by state code."""
    return chain.transitions(x)


def tree_with_chains_classify(x, chain=None):
    """Classify a :class:`TreeWithChains` state as tree / chain interior / chain end."""
    return (chain or TreeWithChains()).classify(x)


@dataclass(frozen=True)
class PathSample:
    """A finite path ``X_0 .. X_horizon`` with first-visit flags."""

    states: list
    first_visit: list
    seed: int
    codes: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def horizon(self):
        return len(self.states) - 1


def first_visit_flags(states):
    """``flags[i]`` is true iff ``states[i]`` does not occur in ``states[:i]``."""
    seen = set()
    flags = []
    for s in states:
        flags.append(s not in seen)
        seen.add(s)
    return flags


def sample_path(chain, x0, horizon, seed):
    """Sample ``X_0 = x0, ..., X_horizon`` step by step from ``chain.transitions``.

    The path is a pure function of ``(chain, x0, horizon, seed)``.
    """
    from ._rng import check_seed

    seed = check_seed(seed)
    horizon = int(horizon)
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    code = chain.encode(x0)
    chain.check_horizon(code, horizon)
    rng = np.random.default_rng(seed)
    u = rng.random(horizon)
    codes = np.empty(horizon + 1, dtype=np.int64)
    codes[0] = code
    cache = {}
    for i in range(horizon):
        row = cache.get(code)
        if row is None:
            _, dst, p = chain.kernel(np.array([code], dtype=np.int64))
            order = np.argsort(dst, kind="stable")
            row = cache[code] = (dst[order], np.cumsum(p[order]))
        dst, cum = row
        j = min(int(np.searchsorted(cum, u[i] * cum[-1], side="right")), dst.size - 1)
        code = int(dst[j])
        codes[i + 1] = code
    states = [chain.decode(c) for c in codes]
    seen = set()
    flags = []
    for c in codes.tolist():
        flags.append(c not in seen)
        seen.add(c)
    return PathSample(states=states, first_visit=flags, seed=seed, codes=codes)
