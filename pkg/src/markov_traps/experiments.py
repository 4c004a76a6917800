"""Computations behind the command-line subcommands and named experiments.

Every runner takes a validated :class:`~markov_traps.config.ExperimentConfig`
and returns ``(tables, summary)``: ``tables`` maps a CSV file name to a
:class:`Table`; ``summary`` is a small JSON-able dict.  Runners do no I/O.
"""

from dataclasses import dataclass

import numpy as np

from .annuli import (
    BY_GREENS,
    BY_NORM,
    criterion_partial_sums,
    density_scan,
    regularity_check,
    sample_pairs,
    set_contributions,
)
from .chains import LazyLine, SimpleWalkZd
from .config import validate
from .exact import (
    Truncation,
    greens_exact,
    lattice_greens,
    lattice_greens_map,
    pi_annealed_bracket,
    survival_exact,
)
from .fields import BlobSet, ConstantOnSet
from .montecarlo import EstimateResult, estimate_greens, simulate, survival_samples


@dataclass
class Table:
    columns: tuple
    rows: list

    def add(self, **row):
        missing = set(self.columns) - set(row)
        if missing:
            raise KeyError(f"missing columns {sorted(missing)}")
        self.rows.append(tuple(row[c] for c in self.columns))


def _table(*cols):
    return Table(tuple(cols), [])


def _modes(cfg):
    return ("quenched", "annealed") if cfg.mode == "both" else (cfg.mode,)


def _estimators(cfg):
    return ("direct", "exponential") if cfg.estimator == "both" else (cfg.estimator,)


def _label(obj):
    return repr(obj)


class _Support:
    """Predicate ``q(x) > 0`` for a field."""

    def __init__(self, field):
        self.field = field

    def contains(self, codes):
        return self.field.values(codes) > 0


# -- generic subcommands ------------------------------------------------------

SURVIVAL_COLUMNS = ("chain", "field", "x0", "mode", "estimator", "horizon", "n_samples", "seed",
                    "mean", "std_error", "z", "ci_low", "ci_high")


def run_simulate(cfg):
    """Survival sweep over ``horizons`` on nested prefixes of one set of paths."""
    chain = cfg.build_chain()
    field = cfg.build_field(chain)
    modes, ests = _modes(cfg), _estimators(cfg)
    batch = simulate(chain, cfg.start(chain), cfg.horizons, cfg.n_samples, cfg.seed, field=field,
                     functionals="exponential" in ests,
                     direct=modes if "direct" in ests else (), workers=cfg.workers)
    table = _table(*SURVIVAL_COLUMNS)
    for mode in modes:
        for est in ests:
            vals = survival_samples(batch, mode, est)
            for k, h in enumerate(batch.horizons):
                r = EstimateResult.from_samples(vals[k], h, cfg.seed, est, mode)
                lo, hi = r.interval(cfg.z)
                table.add(chain=_label(chain), field=_label(field), x0=str(cfg.x0), mode=mode,
                          estimator=est, horizon=int(h), n_samples=r.n_samples, seed=cfg.seed,
                          mean=r.mean, std_error=r.std_error, z=cfg.z, ci_low=lo, ci_high=hi)
    return {"survival.csv": table}, {"rows": len(table.rows)}


BRACKET_COLUMNS = ("radius", "n_states", "x0", "lower", "upper", "gap", "sweeps_lower", "sweeps_upper",
                   "max_residual")


def _brackets(chain, field, x0, radii):
    table = _table(*BRACKET_COLUMNS)
    for r in radii:
        trunc = Truncation.ball(chain, x0, r)
        lo, hi = pi_annealed_bracket(chain, field, trunc)
        a, b = lo.at(x0), hi.at(x0)
        table.add(radius=r, n_states=len(trunc), x0=str(x0), lower=a, upper=b, gap=b - a,
                  sweeps_lower=lo.sweeps, sweeps_upper=hi.sweeps,
                  max_residual=float(max(lo.residual().max(), hi.residual().max())))
    return table


def run_solve(cfg):
    """Annealed trapping probability brackets at ``x0`` for each truncation radius."""
    chain = cfg.build_chain()
    field = cfg.build_field(chain)
    table = _brackets(chain, field, cfg.start(chain), cfg.radii)
    last = table.rows[-1]
    return {"brackets.csv": table}, {"lower": last[3], "upper": last[4], "radius": last[0]}


GREENS_COLUMNS = ("method", "radius", "horizon", "n_samples", "seed", "x0", "target", "value", "std_error")


def run_greens(cfg):
    """g(x0, target) from truncated solves, Monte Carlo, and (Z^d, d >= 3) the full lattice."""
    chain = cfg.build_chain()
    x0 = cfg.start(chain)
    y = x0 if cfg.target is None else cfg.state(chain, cfg.target)
    table = _table(*GREENS_COLUMNS)
    for r in cfg.radii:
        g = greens_exact(chain, Truncation.ball(chain, x0, r)).get(y)
        table.add(method="exact-truncated", radius=r, horizon="", n_samples="", seed="",
                  x0=str(x0), target=str(y), value=g, std_error=0.0)
    for h in cfg.horizons:
        est = estimate_greens(chain, x0, y, h, cfg.n_samples, cfg.seed, workers=cfg.workers)
        table.add(method="monte-carlo", radius="", horizon=h, n_samples=est.n_samples, seed=cfg.seed,
                  x0=str(x0), target=str(y), value=est.mean, std_error=est.std_error)
    if isinstance(chain, SimpleWalkZd) and chain.d >= 3:
        diff = tuple(int(b) - int(a) for a, b in zip(x0, y))
        table.add(method="lattice", radius="", horizon="", n_samples="", seed="", x0=str(x0),
                  target=str(y), value=lattice_greens(diff), std_error=0.0)
    return {"greens.csv": table}, {"rows": len(table.rows)}


CRITERION_COLUMNS = ("radius", "ordering", "terms_counted", "total", "growth", "log_slope")
PARTIAL_COLUMNS = ("radius", "ordering", "k", "partial_sum")


def _criterion(chain, field, x0, radii):
    summary = _table(*CRITERION_COLUMNS)
    partial = _table(*PARTIAL_COLUMNS)
    for r in radii:
        gm = greens_exact(chain, Truncation.ball(chain, x0, r))
        for ordering in (BY_GREENS, BY_NORM):
            s = criterion_partial_sums(gm, field, ordering)
            summary.add(radius=r, ordering=ordering, terms_counted=s.terms_counted, total=s.total,
                        growth=s.growth, log_slope=s.log_slope)
            K = s.partial_sums.size
            ks = np.unique(np.geomspace(1, K, num=min(K, 200)).astype(np.int64))
            for k in ks:
                partial.add(radius=r, ordering=ordering, k=int(k), partial_sum=float(s.partial_sums[k - 1]))
    return summary, partial


def run_criterion(cfg):
    """Partial sums of g(x0, x) q(x) on each truncation, in both orderings."""
    chain = cfg.build_chain()
    field = cfg.build_field(chain)
    summary, partial = _criterion(chain, field, cfg.start(chain), cfg.radii)
    last = summary.rows[-1]
    return ({"criterion.csv": summary, "criterion_partial_sums.csv": partial},
            {"total": last[3], "growth": last[4]})


DENSITY_COLUMNS = ("radius", "alpha", "level", "size", "density", "edge_contaminated")
REGULARITY_COLUMNS = ("radius", "C", "C_prime", "pairs", "n_checked", "n_violations", "min_C_prime", "passed")
VIOLATION_COLUMNS = ("radius", "x", "y", "g_x", "g_y", "q_x", "q_y")


def _regularity(chain, field, x0, radii, C, Cp, n_pairs, seed):
    table = _table(*REGULARITY_COLUMNS)
    viol = _table(*VIOLATION_COLUMNS)
    for r in radii:
        gm = greens_exact(chain, Truncation.ball(chain, x0, r))
        pairs = sample_pairs(gm, n_pairs or None, seed)
        rep = regularity_check(gm, field, C, Cp, pairs=pairs, max_violations=100)
        table.add(radius=r, C=C, C_prime=Cp, pairs=len(pairs), n_checked=rep.n_checked,
                  n_violations=len(rep.violations), min_C_prime=rep.min_C_prime, passed=rep.passed)
        for x, y, gx, gy, qx, qy in rep.violations:
            viol.add(radius=r, x=str(x), y=str(y), g_x=gx, g_y=gy, q_x=qx, q_y=qy)
    return table, viol


def run_annuli(cfg):
    """Annulus densities of the field's support and the regularity scan."""
    chain = cfg.build_chain()
    field = cfg.build_field(chain)
    x0 = cfg.start(chain)
    pred = field.predicate if isinstance(field, ConstantOnSet) else _Support(field)
    dens = _table(*DENSITY_COLUMNS)
    for r in cfg.radii:
        gm = greens_exact(chain, Truncation.ball(chain, x0, r))
        for level, size, d, edge in density_scan(gm, pred, cfg.alpha):
            dens.add(radius=r, alpha=cfg.alpha, level=level, size=size, density=d, edge_contaminated=edge)
    reg, viol = _regularity(chain, field, x0, cfg.radii, cfg.C, cfg.C_prime, cfg.pairs, cfg.seed)
    clean = [row[4] for row in dens.rows if not row[5]]
    return ({"annuli.csv": dens, "regularity.csv": reg, "violations.csv": viol},
            {"max_density_clean": max(clean) if clean else None,
             "regularity_passed": all(row[-1] for row in reg.rows)})


# -- named experiments ---------------------------------------------------------

PRESETS = {
    "example2-dichotomy": {
        "chain": {"kind": "lazy_line"},
        "x0": 2,
        "field": {"kind": "radial", "beta": 2.0},
        "horizons": [100, 1000, 10000, 100000],
        "radii": [5, 10, 20, 40, 80],
        "n_samples": 10000,
        "seed": 20240501,
    },
    "example1-criterion": {
        "chain": {"kind": "zd", "d": 3},
        "x0": [0, 0, 0],
        "field": {"kind": "constant_on_set", "c": 0.3, "set": {"kind": "blob", "n_max": 6}},
        "horizons": [100000],
        "radii": [15],
        "n_samples": 2000,
        "seed": 20240501,
    },
    "theorem3-radial": {
        "chain": {"kind": "zd", "d": 3},
        "x0": [0, 0, 0],
        "field": {"kind": "radial", "beta": 2.0, "offset": 1.0},
        "radii": [5, 10, 15],
        "pairs": 200000,
        "C": 2.0,
        "C_prime": 4.0,
        "seed": 20240501,
    },
}

# lazy-line sites beyond this are never reached at the horizons used here
_LINE_EXACT_CAP = 5000


def _line_oracles(field, h):
    line = LazyLine()
    top = 2 + min(h, _LINE_EXACT_CAP)
    trunc = Truncation.from_states(line, range(2, top + 1), 2)
    return {m: survival_exact(line, field, trunc, h, m) for m in ("quenched", "annealed")}


def per_site_factors(n, q):
    """Probability that the lazy line leaves site n before a fresh trap fires there."""
    n = np.asarray(n, dtype=np.float64)
    return ((1 - q) / n) / (1 - (1 - q) * (1 - 1 / n))


DICHOTOMY_COLUMNS = ("horizon", "mode", "estimator", "n_samples", "seed", "mean", "std_error",
                     "oracle_exact_lower", "oracle_exact_upper", "partial_product", "within_z_se")
LINE_BRACKET_COLUMNS = ("N", "survival_lower", "survival_upper", "per_site_product", "sweeps")


def example2_dichotomy(cfg):
    """Lazy line with q(n) = 1/n^2: quenched survival tends to 1/2, annealed to 0."""
    chain = cfg.build_chain()
    field = cfg.build_field(chain)
    x0 = cfg.start(chain)
    batch = simulate(chain, x0, cfg.horizons, cfg.n_samples, cfg.seed, field=field, functionals=True,
                     direct=("quenched", "annealed"), workers=cfg.workers)
    q = field.values
    table = _table(*DICHOTOMY_COLUMNS)
    for k, h in enumerate(batch.horizons):
        h = int(h)
        exact = _line_oracles(field, h)
        N = x0 + h
        n = np.arange(x0, N + 1)
        products = {
            "quenched": float(np.prod(1 - q(n))),
            "annealed": float(np.prod(per_site_factors(n[:-1], q(n[:-1])))),
        }
        for mode in ("quenched", "annealed"):
            for est in ("exponential", "direct"):
                r = EstimateResult.from_samples(survival_samples(batch, mode, est)[k], h, cfg.seed, est, mode)
                ex = exact[mode]
                ok = (ex.lower - cfg.z * r.std_error <= r.mean <= ex.upper + cfg.z * r.std_error)
                table.add(horizon=h, mode=mode, estimator=est, n_samples=r.n_samples, seed=cfg.seed,
                          mean=r.mean, std_error=r.std_error, oracle_exact_lower=ex.lower,
                          oracle_exact_upper=ex.upper, partial_product=products[mode], within_z_se=ok)

    # fixed-point brackets on interior {2..N-1}, boundary site N
    brackets = _table(*LINE_BRACKET_COLUMNS)
    n_star = _first_below(lambda N: np.prod(per_site_factors(np.arange(x0, N), q(np.arange(x0, N)))), 0.1, x0 + 1)
    Ns = sorted(set([x0 + r for r in cfg.radii] + [n_star - 1, n_star]))
    for N in Ns:
        trunc = Truncation.from_states(chain, range(x0, N), x0)
        lo, hi = pi_annealed_bracket(chain, field, trunc)
        prod = float(np.prod(per_site_factors(np.arange(x0, N), q(np.arange(x0, N)))))
        brackets.add(N=N, survival_lower=1 - hi.at(x0), survival_upper=1 - lo.at(x0),
                     per_site_product=prod, sweeps=lo.sweeps)
    final = table.rows[-4:]
    return ({"dichotomy.csv": table, "annealed_brackets.csv": brackets},
            {"N_star_annealed_below_0.1": n_star,
             "quenched_at_max_horizon": final[0][5], "annealed_at_max_horizon": final[2][5],
             "all_within_z_se": all(row[-1] for row in table.rows)})


def _first_below(fn, level, start):
    N = start
    while fn(N) >= level:
        N += 1
    return N


BALL_COLUMNS = ("n", "center_z", "radius_sq", "points", "contribution", "contribution_first_index",
                "contribution_last_index", "mc_contribution", "mc_std_error", "truncated_lower", "horizon",
                "n_samples", "seed")
HITTING_COLUMNS = ("n_max", "horizon", "n_samples", "seed", "mean", "std_error", "z", "ci_high", "below_one")


def example1_criterion(cfg):
    """Blob set in Z^3: per-ball criterion contributions and the hitting probability."""
    chain = cfg.build_chain()
    field = cfg.build_field(chain)
    if not isinstance(field, ConstantOnSet) or not isinstance(field.predicate, BlobSet):
        raise ValueError("example1-criterion needs a constant_on_set field on the blob set")
    blob = field.predicate
    c = field.c
    x0 = cfg.start(chain)
    balls = [blob.ball(n) for n in range(1, blob.n_max + 1)]
    codes = np.unique(np.concatenate([b.codes() for b in balls]))
    gmap = lattice_greens_map(chain, codes)
    full = set_contributions(gmap, field, balls)
    idx = blob.ball_index(gmap.codes)
    last = np.zeros(gmap.codes.shape, dtype=np.int64)
    for n, b in enumerate(balls, start=1):
        last[b.contains(gmap.codes)] = n
    terms = gmap.values * c
    first_part = [float(terms[idx == n].sum()) for n in range(1, blob.n_max + 1)]
    last_part = [float(terms[last == n].sum()) for n in range(1, blob.n_max + 1)]

    h = int(cfg.horizons[-1])
    batch = simulate(chain, x0, [h], cfg.n_samples, cfg.seed, sets=balls + [blob], workers=cfg.workers)
    radius = int(cfg.radii[-1])
    trunc_map = greens_exact(chain, Truncation.ball(chain, x0, radius))
    trunc_part = set_contributions(trunc_map, field, balls)

    table = _table(*BALL_COLUMNS)
    for n, b in enumerate(balls, start=1):
        occ = EstimateResult.from_samples(batch.occupation[n - 1, 0] * c, h, cfg.seed)
        inside = int(b.contains(trunc_map.codes).sum()) == b.codes().size
        table.add(n=n, center_z=2**n, radius_sq=2**n, points=int(b.codes().size), contribution=float(full[n - 1]),
                  contribution_first_index=first_part[n - 1], contribution_last_index=last_part[n - 1],
                  mc_contribution=occ.mean, mc_std_error=occ.std_error,
                  truncated_lower=float(trunc_part[n - 1]) if inside else "",
                  horizon=h, n_samples=occ.n_samples, seed=cfg.seed)
    hit = EstimateResult.from_samples(batch.hit[-1, 0], h, cfg.seed, "hit")
    hits = _table(*HITTING_COLUMNS)
    hits.add(n_max=blob.n_max, horizon=h, n_samples=hit.n_samples, seed=cfg.seed, mean=hit.mean,
             std_error=hit.std_error, z=cfg.z, ci_high=hit.interval(cfg.z)[1],
             below_one=hit.interval(cfg.z)[1] < 1.0)
    inc = bool(np.all(np.diff(full) > 0))
    return ({"per_ball.csv": table, "hitting.csv": hits},
            {"strictly_increasing": inc, "ratio_last_first": float(full[-1] / full[0]),
             "hitting_mean": hit.mean, "hitting_below_one": bool(hits.rows[0][-1])})


def theorem3_radial(cfg):
    """Radial q on Z^3: criterion partial sums, regularity scan and annealed brackets."""
    chain = cfg.build_chain()
    field = cfg.build_field(chain)
    x0 = cfg.start(chain)
    summary, partial = _criterion(chain, field, x0, cfg.radii)
    reg, viol = _regularity(chain, field, x0, cfg.radii, cfg.C, cfg.C_prime, cfg.pairs, cfg.seed)
    brackets = _brackets(chain, field, x0, cfg.radii)
    return ({"criterion.csv": summary, "criterion_partial_sums.csv": partial, "regularity.csv": reg,
             "violations.csv": viol, "brackets.csv": brackets},
            {"growth": summary.rows[-2][4], "regularity_passed": all(r[-1] for r in reg.rows),
             "lower_bracket_at_x0": brackets.rows[-1][3]})


EXPERIMENTS = {
    "example2-dichotomy": example2_dichotomy,
    "example1-criterion": example1_criterion,
    "theorem3-radial": theorem3_radial,
}

COMMANDS = {
    "simulate": run_simulate,
    "solve": run_solve,
    "greens": run_greens,
    "criterion": run_criterion,
    "annuli": run_annuli,
}


def preset(name, overrides=None):
    """Validated config for a named experiment, with ``overrides`` applied on top."""
    if name not in PRESETS:
        raise KeyError(name)
    raw = dict(PRESETS[name])
    raw.update(overrides or {})
    return validate(raw)
