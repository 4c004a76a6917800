"""Keyed hashing and seed derivation.

Trap decisions are pure functions of a key (seed, state code, time...) so
they can be queried in any order without storing whole trap sets.  Path
randomness comes from ``numpy`` generators whose seeds are split off a master
seed with :class:`numpy.random.SeedSequence`.
"""

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

# domain tags so that quenched and annealed draws never share a key
TAG_QUENCHED = 0x51
TAG_ANNEALED = 0xA7
TAG_REALIZATION = 0x3C


def _as_u64(a):
    a = np.asarray(a)
    if a.dtype == np.uint64:
        return a
    if a.dtype.kind in "iu":
        return a.astype(np.int64).view(np.uint64) if a.dtype.kind == "i" else a.astype(np.uint64)
    return np.asarray(a, dtype=np.uint64)


def _mix(z):
    # splitmix64 finalizer; uint64 arithmetic wraps modulo 2**64
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash64(*keys):
    """Hash integer keys (scalars or broadcastable arrays) to uint64."""
    with np.errstate(over="ignore"):
        h = np.atleast_1d(np.uint64(0))
        for k in keys:
            if isinstance(k, int):
                k = np.uint64(k & MASK64)
            h = _mix(h + _GOLDEN + _mix(np.atleast_1d(_as_u64(k)) + _GOLDEN))
    return h


def hash_uniform(*keys):
    """Uniform variate(s) in [0, 1) determined entirely by ``keys``."""
    return (hash64(*keys) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def derive_seed(*keys):
    """Derive a single 64-bit integer seed from integer keys."""
    return int(hash64(*keys)[0])


def check_seed(seed):
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must lie in [0, 2**64), got {seed}")
    return seed


def block_generator(seed, block):
    """Independent generator for sample block ``block`` under master ``seed``."""
    ss = np.random.SeedSequence(entropy=check_seed(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.PCG64(ss))
