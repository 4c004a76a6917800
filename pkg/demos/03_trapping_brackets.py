"""Two-sided brackets for the annealed trapping probability on Z^3.

The one-step identity pi(x) = q(x) + (1 - q(x)) E_x pi(X_1) is iterated on a
ball.  Treating the outside as trap-free gives a lower bracket, treating it as
certain trapping an upper one.  The walk always leaves a finite ball, so the
upper bracket is 1 here and the lower one carries the information: for
q(x) = (1 + |x|)^-2 it keeps climbing toward 1, for (1 + |x|)^-3 it levels off.
"""

from markov_traps import RadialField, SimpleWalkZd
from markov_traps.exact import Truncation, pi_annealed_bracket

z3 = SimpleWalkZd(3)
for beta in (2.0, 3.0):
    q = RadialField(z3, beta, offset=1.0)
    print(f"q(x) = (1 + |x|)^-{beta:g}")
    for R in (4, 8, 12, 16):
        lo, hi = pi_annealed_bracket(z3, q, Truncation.ball(z3, (0, 0, 0), R))
        print(f"  R={R:>2}: pi(0) in [{lo.at((0, 0, 0)):.4f}, {hi.at((0, 0, 0)):.4f}]"
              f"  sweeps {lo.sweeps}/{hi.sweeps}  residual {max(lo.residual().max(), hi.residual().max()):.1e}")
