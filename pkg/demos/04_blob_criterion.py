"""A thin transient set that still traps: the blob of balls along the z axis.

Ball n is centered at (0, 0, 2^n) with squared radius 2^n.  The walker from
the origin misses the whole blob with positive probability, yet the sums
g(0, x) q(x) over successive balls keep growing, so with q = c on the blob the
criterion sum diverges.
"""

import numpy as np

from markov_traps import BlobSet, ConstantOnSet, SimpleWalkZd
from markov_traps.annuli import set_contributions
from markov_traps.exact import lattice_greens_map
from markov_traps.montecarlo import estimate_hitting_probability

z3 = SimpleWalkZd(3)
blob = BlobSet(z3, n_max=7)
field = ConstantOnSet(z3, blob, 0.3)
balls = [blob.ball(n) for n in range(1, 8)]
g = lattice_greens_map(z3, np.concatenate([b.codes() for b in balls]))
sums = set_contributions(g, field, balls)
for n, (b, s) in enumerate(zip(balls, sums), start=1):
    print(f"ball {n}: {b.codes().size:>5} points, sum g*q = {s:.4f}")
print("growth per doubling ~ sqrt(2) once the balls stop overlapping")

hit = estimate_hitting_probability(z3, (0, 0, 0), BlobSet(z3, n_max=5), 20_000, 2000, seed=11)
print(f"P(hit balls 1..5 within 2e4 steps) = {hit.mean:.3f} +- {hit.std_error:.3f}")
