"""The maximum principle, seen on a grid.

If the data are nonpositive, the solution stays nonpositive. If there is no
noise, the implicit scheme keeps this property exactly. With noise, the
explicit transport step can overshoot by a small amount in the cells next
to the wall. That overshoot is what the verifiers measure.
"""

import numpy as np

from spdemax import (SpaceGrid, SpdeProblem, cfl_grid, driver_increments, solve_spde, verify_barrier,
                     verify_sign)

for cells in (32, 64, 128):
    sg = SpaceGrid(0.0, 1.0, cells)
    tg = cfl_grid(0.25, sg)
    dw = driver_increments(tg, seed=1, indices=range(20))
    for sigma in (0.0, 0.5):
        prob = SpdeProblem(sigma=sigma, ic=lambda x: -np.sin(np.pi * x))
        sol = solve_spde(prob, tg, sg, dw if sigma else np.zeros(tg.n_steps))
        print(f"cells={cells:4d} sigma={sigma}: {verify_sign(sol).line()}")

# the constant 1 solves the equation, so a solution starting below 1 stays below it
sg = SpaceGrid(0.0, 1.0, 64)
tg = cfl_grid(0.25, sg)
dw = driver_increments(tg, seed=2, indices=range(20))
u = solve_spde(SpdeProblem(sigma=0.5, ic=lambda x: np.sin(np.pi * x)), tg, sg, dw)
one = solve_spde(SpdeProblem(sigma=0.5, ic=1.0, bc_lo=1.0, bc_hi=1.0), tg, sg, dw)
print(verify_barrier(u, one).line())
