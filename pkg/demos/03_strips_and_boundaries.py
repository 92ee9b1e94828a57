"""Brownian motion in a strip that sits on a rough boundary.

A point starts at height x above a boundary path and moves as Brownian
motion run backwards in time. r_m is the probability that it leaves through
the top of a strip of width 2^(-m/2). Over a flat boundary this is the
gambler's ruin answer x / width. Over a Brownian boundary, the rougher the
boundary just before t, the smaller r_m gets. bound_r_m turns that into a
computable upper bound; at small m it can exceed 1 and say nothing.
"""

from spdemax import auxiliary as aux
from spdemax.paths import McParams, SamplePath, TimeGrid, simulate_wiener

grid = TimeGrid(1.0, 2**12)
flat = SamplePath.constant(grid, 0.0)
for x in (0.2, 0.5, 0.8):
    est = aux.estimate_r_m(aux.StripProblem(flat, 0, 1.0, x), McParams(4000, seed=5))
    print(f"flat boundary, x={x}: r_0 = {est.value:.3f} +- {est.std_error:.3f}")

g = aux.estimate_gamma(1.0, 1.0, 1.0, McParams(20_000, seed=6))
print(f"gamma(1,1,1) ~ {g.value:.4f}  (lower bound {aux.gamma_lower_bound(1.0, 1.0):.4f})")

rough = simulate_wiener(grid, seed=8)
for m in (0, 2, 4):
    w = aux.strip_width(m)
    prob = aux.StripProblem(rough, m, 1.0, 0.5 * w)
    est = aux.estimate_r_m(prob, McParams(1000, seed=9))
    bound = aux.bound_r_m(prob, 1.0, 1.0, gamma=min(1.0, g.value + 3 * g.std_error))
    print(f"Wiener boundary, m={m}: r_m = {est.value:.3f} +- {est.std_error:.3f}, bound {bound:.3f}")
