"""Solving a stochastic heat equation on (0, 1).

    du = (1/2) u_xx dt + sigma u_x dw

with zero Dirichlet data. Without noise a sine mode decays like
exp(-pi^2 t / 2). With noise each path is different, but averaging many
paths brings back the deterministic decay, since the noise term has mean
zero.
"""

import numpy as np

from spdemax import SpaceGrid, SpdeProblem, cfl_grid, driver_increments, solve_deterministic, solve_spde

sg = SpaceGrid(0.0, 1.0, 64)
tg = cfl_grid(0.1, sg)
print(f"grid: dx={sg.dx:g}, dt={tg.dt:g}, steps={tg.n_steps}")

quiet = SpdeProblem(ic=lambda x: np.sin(np.pi * x))
u = solve_deterministic(quiet, tg, sg)
exact = np.exp(-np.pi**2 * 0.1 / 2)
print(f"u(0.1, 1/2) = {u.values[u.row(0.1), 32]:.5f}   exact {exact:.5f}")

noisy = SpdeProblem(sigma=0.5, ic=lambda x: np.sin(np.pi * x))
ens = solve_spde(noisy, tg, sg, driver_increments(tg, seed=3, indices=range(400)))
mid = ens.values[:, -1, 32]
print(f"noisy paths at (0.1, 1/2): min {mid.min():.3f}, max {mid.max():.3f}")
print(f"mean over 400 paths: {mid.mean():.4f} +- {mid.std(ddof=1) / 20:.4f}")
