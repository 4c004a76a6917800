import math

import numpy as np
import pytest

from markov_traps import (
    BlobSet,
    ChainEndField,
    ConstantField,
    DeterministicDrift,
    DriftTree,
    Everything,
    LazyLine,
    Nothing,
    PathSample,
    RadialField,
    SimpleWalkZd,
    StateSet,
    TreeWithChains,
    ZeroField,
    sample_path,
)
from markov_traps._rng import TAG_REALIZATION, hash64
from markov_traps.exact import Truncation, greens_exact, lattice_greens
from markov_traps.montecarlo import (
    EstimateResult,
    PathFunctionals,
    estimate_greens,
    estimate_hitting_probability,
    estimate_survival,
    path_functionals,
    simulate,
    survival_indicator,
    survival_samples,
    survival_sweep,
)

from oracles import lazy_line_annealed_survival, lazy_line_quenched_survival

Z3 = SimpleWalkZd(3)
LINE = LazyLine()
DRIFT = DeterministicDrift()


def inv_sq(n):
    return 1.0 / np.asarray(n, dtype=float) ** 2


def combined(a, b):
    return math.hypot(a.std_error, b.std_error)


# -- path functionals ---------------------------------------------------------


def test_functionals_zero_field():
    path = sample_path(Z3, (0, 0, 0), 50, seed=1)
    assert path_functionals(path, ZeroField(Z3)) == PathFunctionals(0.0, 0.0, 0.0, 0.0)


def test_functionals_one_state_twice():
    path = PathSample(states=[3, 3], first_visit=[True, False], seed=0)
    pf = path_functionals(path, ConstantField(LINE, 0.5))
    assert pf.R == pytest.approx(math.log(2))
    assert pf.R_tilde == pytest.approx(2 * math.log(2))
    assert pf.S == pytest.approx(0.5)
    assert pf.S_tilde == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(5))
def test_functionals_domination(seed):
    path = sample_path(Z3, (0, 0, 0), 400, seed=seed)
    pf = path_functionals(path, RadialField(Z3, 1.0, offset=1.0))
    assert pf.R <= pf.R_tilde and pf.S <= pf.S_tilde
    assert all(np.isfinite([pf.R, pf.R_tilde, pf.S, pf.S_tilde]))


def test_engine_functionals_match_path_functionals_in_law():
    """Batch engine and the explicit path route give the same mean R, R~."""
    field = RadialField(Z3, 1.0, offset=1.0)
    h, n = 200, 3000
    batch = simulate(Z3, (0, 0, 0), [h], n, seed=21, field=field, functionals=True)
    ref = np.array([[getattr(path_functionals(sample_path(Z3, (0, 0, 0), h, 10_000 + s), field), k)
                     for k in ("R", "R_tilde")] for s in range(n)])
    for j, name in enumerate(("R", "R_tilde")):
        a = getattr(batch, name)[0]
        se = math.hypot(a.std() / math.sqrt(n), ref[:, j].std() / math.sqrt(n))
        assert abs(a.mean() - ref[:, j].mean()) <= 4 * se


def test_engine_first_visit_bookkeeping():
    chain = SimpleWalkZd(2)
    field = RadialField(chain, 1.0, offset=1.0)
    batch = simulate(chain, (0, 0), [0, 5, 60], 200, seed=3, field=field, functionals=True)
    assert np.all(np.diff(batch.R, axis=0) >= 0)
    assert np.all(batch.R <= batch.R_tilde + 1e-15)
    # time 0 alone: R = R~ = -log(1 - q(x0))
    np.testing.assert_allclose(batch.R[0], -math.log1p(-field.q((0, 0))))
    np.testing.assert_allclose(batch.R_tilde[0], batch.R[0])


# -- survival: closed forms and oracles ---------------------------------------


@pytest.mark.parametrize("mode", ["quenched", "annealed"])
@pytest.mark.parametrize("estimator", ["direct", "exponential"])
def test_zero_field_survival_is_one(mode, estimator):
    for chain, x0, h in ((Z3, (0, 0, 0), 300), (LINE, 2, 300), (TreeWithChains(), ((), 0), 100)):
        r = estimate_survival(chain, ZeroField(chain), x0, mode, estimator, h, 500, seed=4)
        assert r.mean == 1.0 and r.std_error == 0.0


@pytest.mark.parametrize("mode", ["quenched", "annealed"])
@pytest.mark.parametrize("estimator", ["direct", "exponential"])
def test_drift_closed_form(mode, estimator):
    c, h = 0.07, 12
    r = estimate_survival(DRIFT, ConstantField(DRIFT, c), 0, mode, estimator, h, 20_000, seed=5)
    exact = (1 - c) ** (h + 1)
    if estimator == "exponential":
        assert r.mean == pytest.approx(exact, rel=1e-12)
    else:
        assert abs(r.mean - exact) <= 4 * r.std_error


def test_lazy_line_quenched_exponential_oracle():
    field = RadialField(LINE, 2.0)
    r = estimate_survival(LINE, field, 2, "quenched", "exponential", 100_000, 10_000, seed=6)
    oracle = lazy_line_quenched_survival(2, 100_000, inv_sq)
    assert abs(r.mean - oracle) <= 4 * r.std_error
    assert abs(r.mean - 0.5) < 0.01


def test_lazy_line_quenched_direct_oracle():
    field = RadialField(LINE, 2.0)
    r = estimate_survival(LINE, field, 2, "quenched", "direct", 20_000, 10_000, seed=7)
    assert abs(r.mean - lazy_line_quenched_survival(2, 20_000, inv_sq)) <= 4 * r.std_error


@pytest.mark.parametrize("estimator", ["direct", "exponential"])
def test_lazy_line_annealed_oracle(estimator):
    field = RadialField(LINE, 2.0)
    h = 2000
    r = estimate_survival(LINE, field, 2, "annealed", estimator, h, 10_000, seed=8)
    assert abs(r.mean - lazy_line_annealed_survival(2, h, inv_sq)) <= 4 * r.std_error


def test_n_samples_zero_rejected():
    with pytest.raises(ValueError):
        estimate_survival(LINE, ZeroField(LINE), 2, horizon=10, n_samples=0)


def test_bad_mode_rejected():
    with pytest.raises(ValueError):
        estimate_survival(LINE, ZeroField(LINE), 2, mode="frozen", horizon=10, n_samples=5)


def test_estimate_result_fields():
    r = EstimateResult.from_samples([0.0, 1.0, 1.0, 0.0], horizon=9, seed=3)
    assert r.mean == 0.5
    assert r.std_error == pytest.approx(np.std([0, 1, 1, 0], ddof=1) / 2)
    assert (r.n_samples, r.horizon, r.master_seed) == (4, 9, 3)


# -- estimator matrix ---------------------------------------------------------

MATRIX = [
    ("drift-const", DRIFT, 0, lambda c: ConstantField(c, 0.1), 20),
    ("line-radial", LINE, 2, lambda c: RadialField(c, 2.0), 2000),
    ("z3-radial", Z3, (0, 0, 0), lambda c: RadialField(c, 2.0, offset=1.0), 400),
    ("tree-chainend", TreeWithChains(), ((), 0), lambda c: ChainEndField(c), 100),
    ("drifttree-const", DriftTree(), (), lambda c: ConstantField(c, 0.03), 40),
]


@pytest.mark.parametrize("name, chain, x0, make, h", MATRIX, ids=[m[0] for m in MATRIX])
@pytest.mark.parametrize("mode", ["quenched", "annealed"])
def test_direct_and_exponential_agree(name, chain, x0, make, h, mode):
    field = make(chain)
    n = 10_000
    d = estimate_survival(chain, field, x0, mode, "direct", h, n, seed=101)
    e = estimate_survival(chain, field, x0, mode, "exponential", h, n, seed=202)
    assert abs(d.mean - e.mean) <= 4 * combined(d, e) + 1e-12
    # variance reduction (slack 1.05)
    assert e.std_error ** 2 <= 1.05 * d.std_error ** 2 + 1e-15
    assert 0.0 <= d.mean <= 1.0 and 0.0 <= e.mean <= 1.0


@pytest.mark.parametrize("name, chain, x0, make, h", MATRIX, ids=[m[0] for m in MATRIX])
def test_quenched_dominates_annealed_pathwise(name, chain, x0, make, h):
    field = make(chain)
    batch = simulate(chain, x0, [h // 4, h], 3000, seed=33, field=field, functionals=True)
    assert np.all(np.exp(-batch.R) >= np.exp(-batch.R_tilde))


@pytest.mark.parametrize("name, chain, x0, make, h", MATRIX, ids=[m[0] for m in MATRIX])
def test_survival_nonincreasing_in_horizon(name, chain, x0, make, h):
    field = make(chain)
    horizons = [0, h // 8, h // 2, h]
    horizons = sorted(set(horizons))
    batch = simulate(chain, x0, horizons, 2000, seed=44, field=field, functionals=True,
                     direct=("quenched", "annealed"))
    for mode in ("quenched", "annealed"):
        for est in ("direct", "exponential"):
            v = survival_samples(batch, mode, est)
            assert np.all(np.diff(v, axis=0) <= 0)


def test_sweep_means_nonincreasing():
    field = RadialField(LINE, 2.0)
    res = survival_sweep(LINE, field, 2, "quenched", "exponential", [10, 100, 1000], 2000, seed=1)
    means = [r.mean for r in res]
    assert means == sorted(means, reverse=True)
    assert [r.horizon for r in res] == [10, 100, 1000]


# -- engine vs step-by-step reference ----------------------------------------


def test_engine_quenched_equals_reference_on_drift():
    """The drift path is deterministic, so per-path quenched outcomes match exactly."""
    field = RadialField(DRIFT, 0.7, cap=0.6, offset=1.0)
    h, n, seed = 30, 500, 99
    batch = simulate(DRIFT, 0, [h], n, seed, field=field, direct=("quenched",))
    path = sample_path(DRIFT, 0, h, seed=0)
    real = hash64(TAG_REALIZATION, seed, np.arange(n, dtype=np.int64))
    ref = [survival_indicator(path, field, "quenched", int(s)) for s in real]
    np.testing.assert_array_equal(batch.quenched_survived[0], ref)


@pytest.mark.parametrize("mode", ["quenched", "annealed"])
def test_engine_direct_matches_reference_in_law(mode):
    field = RadialField(Z3, 1.0, cap=0.5, offset=1.0)
    h, n = 100, 4000
    eng = estimate_survival(Z3, field, (0, 0, 0), mode, "direct", h, n, seed=5)
    ref = [survival_indicator(sample_path(Z3, (0, 0, 0), h, 50_000 + s), field, mode, 70_000 + s)
           for s in range(n)]
    ref = EstimateResult.from_samples(np.array(ref, dtype=float), h, 0)
    assert abs(eng.mean - ref.mean) <= 4 * combined(eng, ref)


def test_reference_annealed_on_lazy_line():
    """The per-step hashed draws and the engine's geometric sojourn draws agree."""
    field = ConstantField(LINE, 0.02)
    h, n = 60, 4000
    ref = [survival_indicator(sample_path(LINE, 2, h, s), field, "annealed", s) for s in range(n)]
    ref = EstimateResult.from_samples(np.array(ref, dtype=float), h, 0)
    eng = estimate_survival(LINE, field, 2, "annealed", "direct", h, n, seed=12)
    assert abs(eng.mean - 0.98 ** (h + 1)) <= 4 * eng.std_error
    assert abs(ref.mean - 0.98 ** (h + 1)) <= 4 * ref.std_error


# -- reproducibility ----------------------------------------------------------


def test_seeded_reproducibility_and_worker_independence():
    field = RadialField(Z3, 2.0, offset=1.0)
    args = (Z3, (0, 0, 0), [50, 200], 5000, 2024)
    kw = dict(field=field, functionals=True, direct=("quenched", "annealed"), sets=[Everything()])
    a = simulate(*args, **kw)
    b = simulate(*args, **kw)
    c = simulate(*args, workers=2, **kw)
    for name in ("R", "R_tilde", "S", "S_tilde", "quenched_survived", "annealed_survived", "occupation"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        np.testing.assert_array_equal(getattr(a, name), getattr(c, name))


# -- Green's function and hitting --------------------------------------------


def test_drift_greens_exact():
    r = estimate_greens(DRIFT, 0, 5, 20, 100, seed=1)
    assert r.mean == 1.0 and r.std_error == 0.0


@pytest.mark.parametrize("n", [2, 5, 10])
def test_lazy_line_greens(n):
    r = estimate_greens(LINE, 2, n, 100_000, 10_000, seed=n)
    assert abs(r.mean - n) <= 4 * r.std_error
    exact = greens_exact(LINE, Truncation.from_states(LINE, range(2, 40), 2)).get(n)
    assert exact == pytest.approx(n, rel=1e-12)


def test_z3_greens_mc_vs_lattice():
    """MC visit count at the origin against the full-lattice value minus the
    horizon tail sum_{n > h} p_n(0,0) ~ 2 (3/(2 pi))^{3/2} / sqrt(h)."""
    h = 10_000
    r = estimate_greens(Z3, (0, 0, 0), (0, 0, 0), h, 10_000, seed=17)
    tail = 2 * (3 / (2 * math.pi)) ** 1.5 / math.sqrt(h)
    assert abs(r.mean - (lattice_greens((0, 0, 0)) - tail)) <= 4 * r.std_error
    assert r.mean >= greens_exact(Z3, Truncation.ball(Z3, (0, 0, 0), 6)).get((0, 0, 0)) - 4 * r.std_error


def test_hitting_contains_start_and_empty():
    r = estimate_hitting_probability(Z3, (0, 0, 0), StateSet(Z3, [(0, 0, 0)]), 100, 500, seed=1)
    assert r.mean == 1.0 and r.std_error == 0.0
    assert estimate_hitting_probability(Z3, (0, 0, 0), Nothing(), 100, 500, seed=1).mean == 0.0
    assert estimate_hitting_probability(Z3, (0, 0, 0), Everything(), 100, 500, seed=1).mean == 1.0


def test_blob_hitting_below_one():
    r = estimate_hitting_probability(Z3, (0, 0, 0), BlobSet(Z3, n_max=6), 10_000, 1000, seed=3)
    assert r.mean < 1 - 4 * r.std_error
    assert r.mean > 0.3


def test_hitting_monotone_in_horizon():
    blob = BlobSet(Z3, n_max=4)
    batch = simulate(Z3, (0, 0, 0), [10, 100, 1000], 2000, seed=5, sets=[blob], occupation=False)
    assert np.all(np.diff(batch.hit[0].astype(int), axis=0) >= 0)
