"""Green's-function annuli and the regularity condition.

Annuli are level bands {alpha L <= g(x0, x) <= L} of the Green's function.  On
the drift tree g = 2^-generation, so each band is exactly two generations.  A
field is regular if comparable Green's values force comparable trap
probabilities; a radial field is, a field flipping between shells is not.
"""

from markov_traps import AlternatingShellField, BlobSet, DriftTree, RadialField, SimpleWalkZd
from markov_traps.annuli import build_annulus, density_scan, regularity_check
from markov_traps.exact import Truncation, greens_exact

tree = DriftTree()
gt = greens_exact(tree, Truncation.ball(tree, (), 8))
for n in range(4):
    ann = build_annulus(gt, 2.0 ** -n, 0.5)
    gens = sorted(set(tree.generation(ann.members).tolist()))
    print(f"tree annulus L=2^-{n}: {len(ann):>3} vertices, generations {gens}")

z3 = SimpleWalkZd(3)
g = greens_exact(z3, Truncation.ball(z3, (0, 0, 0), 8))
for name, q in [("radial", RadialField(z3, 2.0, offset=1.0)),
                ("alternating", AlternatingShellField(z3, 1e-3, 0.3))]:
    rep = regularity_check(g, q, C=2.0, C_prime=4.0)
    print(f"{name:>11}: regular={rep.passed}  smallest working C'={rep.min_C_prime:.2f}"
          f"  violations={len(rep.violations)}")

print("\nblob density per annulus (radius 12 ball):")
for level, size, d, edge in density_scan(greens_exact(z3, Truncation.ball(z3, (0, 0, 0), 12)), BlobSet(z3)):
    print(f"  L={level:.4f} size={size:>5} density={d:.3f}{'  (touches ball edge)' if edge else ''}")
