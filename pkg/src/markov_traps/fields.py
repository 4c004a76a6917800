"""Trapping-probability fields q : S -> [0, 1) and trap decisions.

A field is bound to the chain whose states it is evaluated on.  ``values``
works on arrays of state codes; ``q`` on a single natural state.

Trap decisions are hash-derived Bernoulli draws: the uniform for a key is
compared against ``q(x)``.  A quenched realization keys on
``(realization seed, x)`` so a site's status never changes; annealed draws
key on ``(master seed, time, x)`` so every time step is fresh.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from ._rng import TAG_ANNEALED, TAG_QUENCHED, check_seed, hash_uniform
from .chains import SimpleWalkZd, TreeWithChains

__all__ = [
    "SetPredicate",
    "Everything",
    "Nothing",
    "StateSet",
    "EuclideanBall",
    "BlobSet",
    "TrapField",
    "ZeroField",
    "ConstantField",
    "ConstantOnSet",
    "RadialField",
    "ChainEndField",
    "AlternatingShellField",
    "TabulatedField",
    "TrapRealization",
    "q_eval",
    "quenched_status",
    "annealed_status",
]


# -- set predicates ---------------------------------------------------------


class SetPredicate:
    """Membership test for a set of states, vectorized over codes."""

    def contains(self, codes):
        raise NotImplementedError

    def __contains__(self, state):
        return bool(self.contains(np.array([self.chain.encode(state)], dtype=np.int64))[0])


@dataclass(frozen=True)
class Everything(SetPredicate):
    chain: object = None

    def contains(self, codes):
        return np.ones(np.shape(codes), dtype=bool)

    def __contains__(self, state):
        return True


@dataclass(frozen=True)
class Nothing(SetPredicate):
    chain: object = None

    def contains(self, codes):
        return np.zeros(np.shape(codes), dtype=bool)

    def __contains__(self, state):
        return False


class StateSet(SetPredicate):
    """An explicit finite set of states."""

    def __init__(self, chain, states):
        self.chain = chain
        self.codes = np.unique(np.array([chain.encode(s) for s in states], dtype=np.int64))

    def contains(self, codes):
        return np.isin(np.asarray(codes, dtype=np.int64), self.codes)

    def __len__(self):
        return self.codes.size

    def __repr__(self):
        return f"StateSet(n={self.codes.size})"


@dataclass(frozen=True)
class EuclideanBall(SetPredicate):
    """Closed ball ``|x - center|**2 <= radius_sq`` in Z^d (integer arithmetic)."""

    chain: SimpleWalkZd
    center: tuple
    radius_sq: int

    def contains(self, codes):
        diff = self.chain.coords(codes) - np.asarray(self.center, dtype=np.int64)
        return (diff * diff).sum(axis=-1) <= self.radius_sq

    def codes(self):
        """Sorted codes of all lattice points in the ball."""
        r = int(np.floor(np.sqrt(self.radius_sq)))
        while (r + 1) ** 2 <= self.radius_sq:
            r += 1
        ax = np.arange(-r, r + 1)
        d = self.chain.d
        grid = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
        grid = grid[(grid * grid).sum(axis=1) <= self.radius_sq]
        return np.sort(self.chain.from_coords(grid + np.asarray(self.center)))


class BlobSet(SetPredicate):
    """Union of balls around (0, 0, 2**n) with radius 2**(n/2), n = 1..n_max, in Z^3.

    This set is transient for the simple walk started at the origin while its
    Green's mass from the origin is infinite.
    """

    def __init__(self, chain, n_max=8):
        if not isinstance(chain, SimpleWalkZd) or chain.d != 3:
            raise ValueError("the blob set lives in Z^3")
        if int(n_max) < 1:
            raise ValueError("n_max must be >= 1")
        self.chain = chain
        self.n_max = int(n_max)
        self._centers = np.array([(0, 0, 2**n) for n in range(1, self.n_max + 1)], dtype=np.int64)
        self._radii_sq = np.array([2**n for n in range(1, self.n_max + 1)], dtype=np.int64)

    def __repr__(self):
        return f"BlobSet(n_max={self.n_max})"

    def ball(self, n):
        """The n-th ball as an :class:`EuclideanBall`."""
        if not 1 <= n <= self.n_max:
            raise ValueError(f"ball index must be in 1..{self.n_max}")
        return EuclideanBall(self.chain, (0, 0, 2**n), 2**n)

    def ball_index(self, codes):
        """Smallest n whose ball contains each code, 0 if none."""
        xyz = self.chain.coords(codes)
        out = np.zeros(xyz.shape[:-1], dtype=np.int64)
        for n in range(self.n_max, 0, -1):
            diff = xyz - self._centers[n - 1]
            out[(diff * diff).sum(axis=-1) <= self._radii_sq[n - 1]] = n
        return out

    def contains(self, codes):
        xyz = self.chain.coords(codes)
        r2xy = xyz[..., 0] ** 2 + xyz[..., 1] ** 2
        z = xyz[..., 2]
        hit = np.zeros(z.shape, dtype=bool)
        for (_, _, cz), r2 in zip(self._centers, self._radii_sq):
            hit |= r2xy + (z - cz) ** 2 <= r2
        return hit


# -- fields -------------------------------------------------------------------


def _check_prob(name, value):
    value = float(value)
    if not 0.0 <= value < 1.0:
        raise ValueError(f"{name} must lie in [0, 1), got {value}")
    return value


class TrapField:
    """Base class; subclasses implement the vectorized :meth:`values`."""

    kind = "field"

    def values(self, codes):
        raise NotImplementedError

    def q(self, state):
        return float(self.values(np.array([self.chain.encode(state)], dtype=np.int64))[0])

    def log_escape(self, codes):
        """``-log(1 - q)`` per code; the per-visit annealed exposure."""
        return -np.log1p(-self.values(codes))


@dataclass(frozen=True)
class ZeroField(TrapField):
    chain: object
    kind = "zero"

    def values(self, codes):
        return np.zeros(np.shape(codes))


@dataclass(frozen=True)
class ConstantField(TrapField):
    chain: object
    c: float
    kind = "constant"

    def __post_init__(self):
        object.__setattr__(self, "c", _check_prob("c", self.c))

    def values(self, codes):
        return np.full(np.shape(codes), self.c)


@dataclass(frozen=True)
class ConstantOnSet(TrapField):
    """q = c on a set, 0 elsewhere."""

    chain: object
    predicate: SetPredicate
    c: float
    kind = "constant_on_set"

    def __post_init__(self):
        object.__setattr__(self, "c", _check_prob("c", self.c))

    def values(self, codes):
        return np.where(self.predicate.contains(codes), self.c, 0.0)


@dataclass(frozen=True)
class RadialField(TrapField):
    """q(x) = min(cap, (offset + |x|) ** -beta) with |x| the chain's norm."""

    chain: object
    beta: float
    cap: float = 0.5
    offset: float = 0.0
    kind = "radial"

    def __post_init__(self):
        object.__setattr__(self, "cap", _check_prob("cap", self.cap))
        if float(self.beta) < 0:
            raise ValueError("beta must be nonnegative")
        if float(self.offset) < 0:
            raise ValueError("offset must be nonnegative")

    def values(self, codes):
        r = self.offset + self.chain.norm(codes)
        with np.errstate(divide="ignore", over="ignore"):
            q = np.where(r > 0, np.power(np.maximum(r, 1e-300), -float(self.beta)), np.inf)
        return np.minimum(q, self.cap)


@dataclass(frozen=True)
class ChainEndField(TrapField):
    """q = 1/n at the end of each appended chain of length n, 0 elsewhere.

    Length-1 chain ends would get q = 1, which is excluded; values are capped
    at ``cap``.
    """

    chain: TreeWithChains
    cap: float = 0.5
    kind = "chain_end"

    def __post_init__(self):
        if not isinstance(self.chain, TreeWithChains):
            raise ValueError("chain-end fields live on TreeWithChains")
        object.__setattr__(self, "cap", _check_prob("cap", self.cap))

    def values(self, codes):
        _, k, gen = self.chain.split(codes)
        end = (k > 0) & (k == gen)
        return np.where(end, np.minimum(1.0 / np.maximum(gen, 1), self.cap), 0.0)


@dataclass(frozen=True)
class AlternatingShellField(TrapField):
    """q alternates between two values on integer shells ``floor(|x|)``."""

    chain: object
    q_even: float
    q_odd: float
    kind = "alternating_shells"

    def __post_init__(self):
        object.__setattr__(self, "q_even", _check_prob("q_even", self.q_even))
        object.__setattr__(self, "q_odd", _check_prob("q_odd", self.q_odd))

    def values(self, codes):
        shell = np.floor(self.chain.norm(codes)).astype(np.int64)
        return np.where(shell % 2 == 0, self.q_even, self.q_odd)


class TabulatedField(TrapField):
    """Explicit values on finitely many states, ``default`` elsewhere."""

    kind = "tabulated"

    def __init__(self, chain, table, default=0.0):
        self.chain = chain
        self.default = _check_prob("default", default)
        items = sorted((chain.encode(s), _check_prob(f"q({s!r})", v)) for s, v in dict(table).items())
        self._codes = np.array([c for c, _ in items], dtype=np.int64)
        self._vals = np.array([v for _, v in items], dtype=np.float64)

    def __repr__(self):
        return f"TabulatedField(n={self._codes.size}, default={self.default})"

    def values(self, codes):
        codes = np.asarray(codes, dtype=np.int64)
        out = np.full(codes.shape, self.default)
        if self._codes.size:
            pos = np.clip(np.searchsorted(self._codes, codes), 0, self._codes.size - 1)
            hit = self._codes[pos] == codes
            out[hit] = self._vals[pos[hit]]
        return out


def q_eval(field, x):
    """q(x) for a natural state ``x``."""
    return field.q(x)


# -- trap decisions -----------------------------------------------------------


@dataclass
class TrapRealization:
    """One frozen trap set T, decided lazily and memoized per state."""

    field: TrapField
    seed: int
    memo: dict = dc_field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.seed = check_seed(self.seed)

    def status(self, x):
        code = self.field.chain.encode(x)
        hit = self.memo.get(code)
        if hit is None:
            hit = bool(quenched_draws(self.seed, np.array([code]), self.field)[0])
            self.memo[code] = hit
        return hit


def quenched_draws(seeds, codes, field):
    """Vectorized quenched trap status for ``(realization seed, code)`` pairs."""
    codes = np.asarray(codes, dtype=np.int64)
    return hash_uniform(TAG_QUENCHED, seeds, codes) < field.values(codes)


def quenched_status(real, x):
    """Whether ``x`` is a trap in realization ``real`` (stable across queries)."""
    return real.status(x)


def annealed_status(field, x, time, master_seed):
    """Fresh trap decision for site ``x`` at ``time``; pure in its full key."""
    code = field.chain.encode(x)
    time = int(time)
    if time < 0:
        raise ValueError("time must be nonnegative")
    u = hash_uniform(TAG_ANNEALED, check_seed(master_seed), time, code)[0]
    return bool(u < field.q(x))
