"""Three routes to the Green's function g(0, 0) of simple random walk on Z^3.

A killed ball solve undercounts returns that wander outside the ball, Monte
Carlo to a finite horizon undercounts late returns, and the Bessel-integral
formula on the full lattice has neither bias.  Watch the first two creep up
toward the third.
"""

from markov_traps import LazyLine, SimpleWalkZd
from markov_traps.exact import Truncation, greens_exact, lattice_greens
from markov_traps.montecarlo import estimate_greens

z3 = SimpleWalkZd(3)
full = lattice_greens((0, 0, 0))
print(f"full lattice            g(0,0) = {full:.6f}")
for R in (4, 8, 12, 16):
    trunc = Truncation.ball(z3, (0, 0, 0), R)
    g = greens_exact(z3, trunc).get((0, 0, 0))
    print(f"killed ball R={R:<2} ({len(trunc):>5} states) g = {g:.6f}  deficit*R = {(full - g) * R:.3f}")
for h in (100, 1000, 5000):
    r = estimate_greens(z3, (0, 0, 0), (0, 0, 0), h, 20_000, seed=3)
    print(f"MC horizon {h:<5}          g = {r.mean:.4f} +- {r.std_error:.4f}")

# on the lazy line every visit to n lasts n steps on average
line = LazyLine()
g = greens_exact(line, Truncation.from_states(line, range(2, 50), 2))
print("\nlazy line g(2, n):", [round(g.get(n), 10) for n in (2, 3, 5, 10, 20)])
