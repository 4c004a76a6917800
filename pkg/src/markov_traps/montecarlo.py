"""Path functionals and Monte Carlo estimators for trapped chains.

The batch engine simulates many independent paths at once in "runs": a path
that sits on a state with a self-loop stays there for a geometric number of
steps, and that whole sojourn is processed in one vectorized step.  For the
lazy line this cuts a horizon of 1e5 steps to a few hundred iterations.

Samples are split into fixed-size blocks.  Block ``b`` draws from its own
generator derived from ``(seed, b)``, and results are concatenated in block
order, so output is bit-identical for a given seed whatever the worker count.

Every estimate is for a finite horizon.  Survival up to ``h`` overestimates
survival forever; Green's and hitting estimates are lower bounds.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._rng import TAG_ANNEALED, TAG_REALIZATION, block_generator, check_seed, hash64, hash_uniform
from .fields import Everything, Nothing, StateSet, quenched_draws

__all__ = [
    "BLOCK_SIZE",
    "PathFunctionals",
    "EstimateResult",
    "PathBatch",
    "path_functionals",
    "survival_indicator",
    "simulate",
    "estimate_survival",
    "survival_sweep",
    "estimate_greens",
    "estimate_hitting_probability",
    "estimate_occupation",
]

BLOCK_SIZE = 2048


@dataclass(frozen=True)
class PathFunctionals:
    """First-visit and full exposure sums of one path at its horizon."""

    R: float
    R_tilde: float
    S: float
    S_tilde: float


@dataclass(frozen=True)
class EstimateResult:
    mean: float
    std_error: float
    n_samples: int
    horizon: int
    master_seed: int
    estimator: str = ""
    mode: str = ""

    @classmethod
    def from_samples(cls, x, horizon, seed, estimator="", mode=""):
        x = np.asarray(x, dtype=np.float64)
        n = x.size
        sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
        return cls(float(np.mean(x)), float(sd / np.sqrt(n)), n, int(horizon), int(seed), estimator, mode)

    def interval(self, z=4.0):
        return self.mean - z * self.std_error, self.mean + z * self.std_error

    def agrees_with(self, value, z=4.0):
        return abs(self.mean - value) <= z * self.std_error


def path_functionals(path, field):
    """R, R~, S, S~ of an explicit :class:`~markov_traps.chains.PathSample`."""
    codes = path.codes
    if codes is None:
        codes = field.chain.encode_many(path.states)
    q = field.values(codes)
    ell = -np.log1p(-q)
    first = np.asarray(path.first_visit, dtype=bool)
    return PathFunctionals(
        R=float(ell[first].sum()),
        R_tilde=float(ell.sum()),
        S=float(q[first].sum()),
        S_tilde=float(q.sum()),
    )


def survival_indicator(path, field, mode, seed):
    """Step-by-step survival of an explicit path against hashed trap draws.

    ``quenched`` uses the frozen realization keyed by ``seed``; ``annealed``
    draws afresh at each time from ``(seed, time, x)``.  This is the slow
    reference the batch engine is checked against.
    """
    codes = path.codes
    if codes is None:
        codes = field.chain.encode_many(path.states)
    q = field.values(codes)
    if mode == "quenched":
        trapped = quenched_draws(np.uint64(check_seed(seed)), codes, field)
    elif mode == "annealed":
        u = hash_uniform(TAG_ANNEALED, check_seed(seed), np.arange(codes.size), codes)
        trapped = u < q
    else:
        raise ValueError(f"mode must be 'quenched' or 'annealed', got {mode!r}")
    return not bool(trapped.any())


@dataclass
class PathBatch:
    """Per-path outputs of :func:`simulate`, indexed ``[checkpoint, path]``.

    Set-valued outputs are indexed ``[set, checkpoint, path]``.  Arrays that
    were not requested are ``None``.
    """

    horizons: np.ndarray
    seed: int
    R: np.ndarray = None
    R_tilde: np.ndarray = None
    S: np.ndarray = None
    S_tilde: np.ndarray = None
    quenched_survived: np.ndarray = None
    annealed_survived: np.ndarray = None
    occupation: np.ndarray = None
    hit: np.ndarray = None

    @property
    def n_paths(self):
        for a in (self.R_tilde, self.quenched_survived, self.annealed_survived, self.occupation, self.hit):
            if a is not None:
                return a.shape[-1]
        return 0


_FIELDS = ("R", "R_tilde", "S", "S_tilde", "quenched_survived", "annealed_survived", "occupation", "hit")


def _run_block(task):
    (chain, x0, horizons, n, seed, block, start, field, sets, functionals, direct, need_occ) = task
    rng = block_generator(seed, block)
    K = horizons.size
    hmax = int(horizons[-1])
    out = {}
    if functionals:
        for name in ("R", "R_tilde", "S", "S_tilde"):
            out[name] = np.zeros((K, n))
    if "quenched" in direct:
        out["quenched_survived"] = np.ones((K, n), dtype=bool)
        real_seeds = hash64(TAG_REALIZATION, seed, np.arange(start, start + n, dtype=np.int64))
    if "annealed" in direct:
        out["annealed_survived"] = np.ones((K, n), dtype=bool)
    m = len(sets)
    if m:
        out["hit"] = np.zeros((m, K, n), dtype=bool)
        if need_occ:
            out["occupation"] = np.zeros((m, K, n), dtype=np.int64)
    record = functionals and chain.revisits
    runs = []
    hits_only = m and not need_occ and field is None

    x = np.full(n, x0, dtype=np.int64)
    t = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    while active.size:
        xs = x[active]
        ts = t[active]
        if chain.has_self_loops:
            leave = 1.0 - chain.stay_prob(xs)
            c = np.full(xs.size, hmax + 1, dtype=np.int64) - ts
            moving = leave > 0
            c[moving] = rng.geometric(leave[moving])
        else:
            moving = None
            c = np.ones(xs.size, dtype=np.int64)
        end = ts + c
        if field is not None:
            qv = field.values(xs)
            if functionals:
                ell = -np.log1p(-qv)
            if "annealed" in direct:
                # steps until the first fresh trap at this site: Geometric(q)
                u = 1.0 - rng.random(xs.size)
                with np.errstate(divide="ignore", invalid="ignore"):
                    ttrap = np.where(qv > 0, np.ceil(np.log(u) / np.log1p(-qv)), np.inf)
                ttrap = np.maximum(ttrap, 1.0)
            if "quenched" in direct:
                is_trap = quenched_draws(real_seeds[active], xs, field)
        inset = [s.contains(xs) for s in sets]
        for k in range(K - 1, -1, -1):
            eff = np.minimum(end, horizons[k] + 1) - ts
            live = eff > 0
            if not live.any():
                break
            eff = np.where(live, eff, 0)
            if functionals:
                out["R_tilde"][k, active] += eff * ell
                out["S_tilde"][k, active] += eff * qv
                if not chain.revisits:
                    out["R"][k, active] += live * ell
                    out["S"][k, active] += live * qv
            if "quenched" in direct:
                out["quenched_survived"][k, active] &= ~(live & is_trap)
            if "annealed" in direct:
                out["annealed_survived"][k, active] &= ~(ttrap <= eff)
            for j in range(m):
                out["hit"][j, k, active] |= live & inset[j]
                if need_occ:
                    out["occupation"][j, k, active] += eff * inset[j]
        if record:
            runs.append((active, xs, ts))
        t[active] = end
        nxt = chain.jump(xs, rng)
        x[active] = nxt if moving is None else np.where(moving, nxt, xs)
        keep = end <= hmax
        if hits_only:
            keep &= ~out["hit"][:, -1, active].all(axis=0)
        active = active[keep]

    if record and runs:
        p = np.concatenate([r[0] for r in runs])
        xc = np.concatenate([r[1] for r in runs])
        tc = np.concatenate([r[2] for r in runs])
        order = np.lexsort((tc, xc, p))
        p, xc, tc = p[order], xc[order], tc[order]
        first = np.ones(p.size, dtype=bool)
        first[1:] = (p[1:] != p[:-1]) | (xc[1:] != xc[:-1])
        p, xc, tc = p[first], xc[first], tc[first]
        qv = field.values(xc)
        ell = -np.log1p(-qv)
        for k in range(K):
            w = tc <= horizons[k]
            out["R"][k] = np.bincount(p[w], weights=ell[w], minlength=n)
            out["S"][k] = np.bincount(p[w], weights=qv[w], minlength=n)
    return out


def simulate(
    chain,
    x0,
    horizons,
    n_samples,
    seed,
    field=None,
    sets=(),
    functionals=False,
    direct=(),
    occupation=True,
    workers=1,
    block_size=BLOCK_SIZE,
):
    """Simulate ``n_samples`` paths from ``x0`` and evaluate them at each horizon.

    Parameters
    ----------
    horizons : int or sequence of int
        Checkpoints; outputs at a checkpoint only see the path prefix up to it.
    field : TrapField, optional
        Required for ``functionals`` and ``direct``.
    sets : sequence of SetPredicate
        Hitting indicators (and occupation counts if ``occupation``) per set.
    functionals : bool
        Compute R, R~, S, S~ per path.
    direct : iterable of {"quenched", "annealed"}
        Sample trap statuses and record survival indicators.
    workers : int
        Process pool size; does not affect results.
    """
    seed = check_seed(seed)
    n_samples = int(n_samples)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    horizons = np.atleast_1d(np.asarray(horizons, dtype=np.int64))
    if horizons.size == 0 or np.any(horizons < 0):
        raise ValueError("horizons must be nonnegative")
    if np.any(np.diff(horizons) <= 0):
        raise ValueError("horizons must be strictly increasing")
    direct = tuple(direct)
    for d in direct:
        if d not in ("quenched", "annealed"):
            raise ValueError(f"unknown direct mode {d!r}")
    if (functionals or direct) and field is None:
        raise ValueError("a trap field is required for functionals or direct estimators")
    if field is not None and field.chain != chain:
        raise ValueError("field is bound to a different chain")
    x0c = chain.encode(x0)
    chain.check_horizon(x0c, int(horizons[-1]))

    tasks = []
    for b, start in enumerate(range(0, n_samples, block_size)):
        n = min(block_size, n_samples - start)
        tasks.append((chain, x0c, horizons, n, seed, b, start, field, tuple(sets),
                      bool(functionals), direct, bool(occupation)))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, tasks))
    else:
        parts = [_run_block(t) for t in tasks]

    batch = PathBatch(horizons=horizons, seed=seed)
    for name in _FIELDS:
        if name in parts[0]:
            setattr(batch, name, np.concatenate([p[name] for p in parts], axis=-1))
    return batch


def _check_mode(mode, estimator):
    if mode not in ("quenched", "annealed"):
        raise ValueError(f"mode must be 'quenched' or 'annealed', got {mode!r}")
    if estimator not in ("direct", "exponential"):
        raise ValueError(f"estimator must be 'direct' or 'exponential', got {estimator!r}")


def survival_samples(batch, mode, estimator):
    """Per-path survival values ``[checkpoint, path]`` from a batch."""
    if estimator == "direct":
        return (batch.quenched_survived if mode == "quenched" else batch.annealed_survived).astype(np.float64)
    return np.exp(-(batch.R if mode == "quenched" else batch.R_tilde))


def survival_sweep(chain, field, x0, mode, estimator, horizons, n_samples, seed, workers=1):
    """Survival up to each horizon, estimated on nested prefixes of the same paths."""
    _check_mode(mode, estimator)
    batch = simulate(
        chain, x0, horizons, n_samples, seed, field=field,
        functionals=estimator == "exponential",
        direct=(mode,) if estimator == "direct" else (),
        workers=workers,
    )
    vals = survival_samples(batch, mode, estimator)
    return [
        EstimateResult.from_samples(vals[k], h, seed, estimator, mode)
        for k, h in enumerate(batch.horizons)
    ]


def estimate_survival(chain, field, x0, mode="quenched", estimator="exponential",
                      horizon=1000, n_samples=1000, seed=0, workers=1):
    """Estimate P(no trapping up to ``horizon``) from ``x0``.

    ``direct`` samples trap statuses along each path and averages the survival
    indicator.  ``exponential`` averages exp(-R) (quenched) or exp(-R~)
    (annealed), the conditional survival given the path.
    """
    return survival_sweep(chain, field, x0, mode, estimator, [int(horizon)], n_samples, seed, workers)[0]


def estimate_greens(chain, x0, y, horizon, n_samples, seed, workers=1):
    """Mean number of visits to ``y`` at times ``0..horizon``."""
    target = StateSet(chain, [y])
    batch = simulate(chain, x0, [int(horizon)], n_samples, seed, sets=[target], workers=workers)
    return EstimateResult.from_samples(batch.occupation[0, 0], horizon, seed, "visits")


def estimate_hitting_probability(chain, x0, predicate, horizon, n_samples, seed, workers=1):
    """Fraction of paths that enter the set by ``horizon``."""
    if isinstance(predicate, Nothing):
        return EstimateResult(0.0, 0.0, int(n_samples), int(horizon), check_seed(seed), "hit")
    if isinstance(predicate, Everything):
        return EstimateResult(1.0, 0.0, int(n_samples), int(horizon), check_seed(seed), "hit")
    batch = simulate(chain, x0, [int(horizon)], n_samples, seed, sets=[predicate],
                     occupation=False, workers=workers)
    return EstimateResult.from_samples(batch.hit[0, 0], horizon, seed, "hit")


def estimate_occupation(chain, x0, predicates, horizon, n_samples, seed, workers=1):
    """Expected time spent in each set up to ``horizon`` (one shared batch)."""
    batch = simulate(chain, x0, [int(horizon)], n_samples, seed, sets=list(predicates), workers=workers)
    return [EstimateResult.from_samples(batch.occupation[j, 0], horizon, seed, "occupation")
            for j in range(len(predicates))]
