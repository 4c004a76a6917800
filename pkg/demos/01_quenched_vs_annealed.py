"""Quenched traps can let a walker live while annealed ones kill it.

The lazy line moves n -> n+1 with probability 1/n and otherwise stays put.
Traps sit at site n with probability q(n) = 1/n^2.  Frozen (quenched) traps
only get one chance per site, so survival tends to prod (1 - 1/n^2) = 1/2.
Fresh (annealed) traps get a new chance every step, and the walker spends
about n steps at site n, so survival decays to zero.
"""

import numpy as np

from markov_traps import LazyLine, RadialField
from markov_traps.exact import Truncation, pi_annealed_bracket
from markov_traps.montecarlo import EstimateResult, simulate, survival_samples

line = LazyLine()
q = RadialField(line, beta=2.0)  # q(n) = n^-2
horizons = [10, 100, 1000, 10_000, 100_000]
batch = simulate(line, 2, horizons, 5000, seed=7, field=q, functionals=True,
                 direct=("quenched", "annealed"))

print(f"{'horizon':>8} {'quenched':>18} {'annealed':>18}")
for k, h in enumerate(horizons):
    cells = []
    for mode in ("quenched", "annealed"):
        r = EstimateResult.from_samples(survival_samples(batch, mode, "exponential")[k], h, 7)
        cells.append(f"{r.mean:.4f} +- {r.std_error:.4f}")
    print(f"{h:>8} {cells[0]:>18} {cells[1]:>18}")

# the annealed limit from the one-step fixed point on {2..N-1}
print("\nannealed survival-forever bracket on interior {2..N-1}:")
for N in (10, 20, 40, 80):
    lo, hi = pi_annealed_bracket(line, q, Truncation.from_states(line, range(2, N), 2))
    print(f"  N={N:>3}: [{1 - hi.at(2):.4f}, {1 - lo.at(2):.4f}]")
print("lower ends are ~0: with a trapping boundary the walker is always caught eventually.")
print(f"quenched partial product to N=100002: {np.prod(1 - 1 / np.arange(2, 100003.0) ** 2):.6f}")
