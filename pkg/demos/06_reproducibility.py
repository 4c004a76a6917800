"""Seeds fully determine results, whatever the worker count.

Paths are simulated in fixed blocks, each with its own child seed, and traps
are a keyed hash of (seed, state), so a parallel run reproduces a serial one
bit for bit.  Extending a run by whole blocks of 2048 paths keeps its prefix;
a partial last block is drawn differently once it grows.
"""

import numpy as np

from markov_traps import RadialField, SimpleWalkZd
from markov_traps.montecarlo import simulate

z3 = SimpleWalkZd(3)
q = RadialField(z3, 2.0, offset=1.0)
kw = dict(field=q, functionals=True, direct=("quenched",))
a = simulate(z3, (0, 0, 0), [50, 200], 5000, 42, **kw)
b = simulate(z3, (0, 0, 0), [50, 200], 5000, 42, workers=2, **kw)
c = simulate(z3, (0, 0, 0), [50, 200], 4096, 42, **kw)
d = simulate(z3, (0, 0, 0), [50, 200], 6144, 42, **kw)
print("serial == 2 workers:", np.array_equal(a.R, b.R) and np.array_equal(a.quenched_survived, b.quenched_survived))
print("4096 paths are a prefix of 6144:", np.array_equal(c.R, d.R[:, :4096]))
print("5000 paths are a prefix of 6144:", np.array_equal(a.R, d.R[:, :5000]))
print("different seed differs:", not np.array_equal(a.R, simulate(z3, (0, 0, 0), [50, 200], 5000, 43, **kw).R))
