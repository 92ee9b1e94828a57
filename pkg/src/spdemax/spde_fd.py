"""Finite differences for du = ((1/2) a D^2 u + f) dt + (sigma D u + g) dw on an interval.

Scheme: Crank-Nicolson in the drift, explicit Euler-Maruyama in the noise
with a centred first difference, Dirichlet rows pinned at every step::

    (I - dt/2 L_n) u^{n+1} = (I + dt/2 L_n) u^n + dt f_n
                             + (sigma_n D_c u^n + g_n) dw_n,   L_n = (a_n/2) D^2

Coefficients are frozen at the left end of each step.  Under
dt <= dx^2 / (2 max a) the explicit half has nonnegative weights and the
implicit half is an M-matrix, so nonpositive data stay exactly nonpositive
when sigma = 0.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .paths import SamplePath, TimeGrid, wiener_block
from .report import Report
from .tridiag import solve_tridiagonal


@dataclass(frozen=True)
class SpaceGrid:
    x_lo: float
    x_hi: float
    n_cells: int

    def __post_init__(self):
        if not self.x_hi > self.x_lo:
            raise ValueError("empty interval")
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise ValueError("need at least two cells")

    @classmethod
    def from_step(cls, x_lo: float, x_hi: float, dx: float) -> "SpaceGrid":
        n = round((x_hi - x_lo) / dx)
        if abs(n * dx - (x_hi - x_lo)) > 1e-9 * (x_hi - x_lo):
            raise ValueError("interval length is not a multiple of dx")
        return cls(x_lo, x_hi, n)

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return self.x_lo + self.dx * np.arange(self.n_cells + 1)


def coef_series(coef, times: np.ndarray) -> np.ndarray:
    """Scalar, per-time array, or callable of t -> values at ``times``."""
    if callable(coef):
        out = np.broadcast_to(np.asarray(coef(times), dtype=float), times.shape)
    else:
        arr = np.asarray(coef, dtype=float)
        if arr.ndim == 0:
            out = np.full(times.shape, float(arr))
        elif arr.shape == times.shape:
            out = arr
        else:
            raise ValueError(f"coefficient series has shape {arr.shape}, expected {times.shape}")
    return np.array(out, dtype=float)


def _boundary(bc, t: float) -> float:
    return float(bc(t)) if callable(bc) else float(bc)


def eval_field(fn, t, x) -> np.ndarray:
    """Evaluate forcing ``fn(t, x)``; None means zero."""
    t = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(t.shape, np.shape(x))
    if fn is None:
        return np.zeros(shape)
    return np.broadcast_to(np.asarray(fn(t, x), dtype=float), shape)


@dataclass(frozen=True)
class SpdeProblem:
    """Data of the equation on (x_lo, x_hi).

    ``a`` and ``sigma`` are scalars, per-time-node arrays, or callables of t.
    ``f`` and ``g`` are broadcasting callables ``(t, x) -> array`` or None.
    Omitted coercivity constants are set to the largest admissible values.
    """

    x_lo: float = 0.0
    x_hi: float = 1.0
    a: object = 1.0
    sigma: object = 0.0
    f: Callable | None = None
    g: Callable | None = None
    bc_lo: object = 0.0
    bc_hi: object = 0.0
    ic: object = 0.0
    delta0: float | None = None
    delta1: float | None = None
    vanish_beyond_one: bool = False

    def initial(self, x: np.ndarray) -> np.ndarray:
        if callable(self.ic):
            return np.broadcast_to(np.asarray(self.ic(x), dtype=float), x.shape).copy()
        arr = np.asarray(self.ic, dtype=float)
        return np.broadcast_to(arr, x.shape).copy()

    def boundary(self, t: float) -> tuple[float, float]:
        return _boundary(self.bc_lo, t), _boundary(self.bc_hi, t)

    def coefficients(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return coef_series(self.a, times), coef_series(self.sigma, times)

    def coercivity_constants(self, times: np.ndarray) -> tuple[float, float]:
        a, s = self.coefficients(times)
        rate = a - s**2
        d1 = self.delta1 if self.delta1 is not None else min(1.0, float(np.min(rate / a)))
        d0 = self.delta0 if self.delta0 is not None else min(
            1.0, float(np.min(d1 * a)), float(1.0 / np.max(rate)))
        return d0, d1

    def coercivity_violation(self, times: np.ndarray):
        """First (t, reason) where delta0 <= delta1 a <= a - sigma^2 <= 1/delta0 fails, else None."""
        a, s = self.coefficients(times)
        if np.any(a <= 0):
            j = int(np.argmax(a <= 0))
            return times[j], "a must be positive"
        rate = a - s**2
        if np.any(rate <= 0):
            j = int(np.argmax(rate <= 0))
            return times[j], "coercivity fails: a - sigma^2 must be positive"
        d0, d1 = self.coercivity_constants(times)
        if not (0 < d0 <= 1 and 0 < d1 <= 1):
            return times[0], f"coercivity constants must lie in (0, 1], got {d0}, {d1}"
        eps = 1e-12
        checks = [
            (d0 <= d1 * a * (1 + eps), "delta0 <= delta1 a"),
            (d1 * a <= rate * (1 + eps), "delta1 a <= a - sigma^2"),
            (rate <= (1 + eps) / d0, "a - sigma^2 <= 1/delta0"),
        ]
        for ok, what in checks:
            if not np.all(ok):
                j = int(np.argmax(~ok))
                return times[j], f"coercivity fails: {what}"
        return None


@dataclass(frozen=True)
class FieldSolution:
    """Saved rows of a solve; ``values`` is (rows, M+1) or (members, rows, M+1)."""

    problem: SpdeProblem
    tgrid: TimeGrid
    sgrid: SpaceGrid
    values: np.ndarray
    noise: np.ndarray
    save_every: int = 1

    def __post_init__(self):
        self.values.flags.writeable = False
        self.noise.flags.writeable = False

    @property
    def ensemble(self) -> bool:
        return self.values.ndim == 3

    @property
    def times(self) -> np.ndarray:
        return self.tgrid.times[:: self.save_every]

    @property
    def x(self) -> np.ndarray:
        return self.sgrid.nodes

    def __len__(self) -> int:
        return self.values.shape[0] if self.ensemble else 1

    def member(self, k: int) -> "FieldSolution":
        if not self.ensemble:
            raise ValueError("not an ensemble")
        return FieldSolution(self.problem, self.tgrid, self.sgrid,
                             self.values[k], self.noise[k], self.save_every)

    def members(self):
        return [self.member(k) for k in range(len(self))] if self.ensemble else [self]

    def stack(self) -> np.ndarray:
        """Values with a leading member axis."""
        return self.values if self.ensemble else self.values[None]

    def mean(self) -> np.ndarray:
        return self.stack().mean(axis=0)

    def row(self, t: float) -> int:
        """Saved row closest to time t."""
        return int(np.argmin(np.abs(self.times - t)))


def _increments(driver, tgrid: TimeGrid) -> np.ndarray:
    if isinstance(driver, SamplePath):
        if driver.grid.n_steps != tgrid.n_steps or not math.isclose(driver.grid.dt, tgrid.dt):
            raise ValueError("driver path grid differs from the time grid")
        return np.diff(driver.values)
    dw = np.asarray(driver, dtype=float)
    if dw.shape[-1] != tgrid.n_steps or dw.ndim not in (1, 2):
        raise ValueError(f"need {tgrid.n_steps} increments per member, got shape {dw.shape}")
    return dw


def driver_increments(tgrid: TimeGrid, seed: int, indices) -> np.ndarray:
    """Wiener increments (members, N) from the per-path streams of ``seed``."""
    return np.diff(wiener_block(tgrid, seed, np.atleast_1d(indices)), axis=-1)


def cfl_grid(horizon: float, sgrid: SpaceGrid, a_max: float = 1.0, safety: float = 1.0) -> TimeGrid:
    """Coarsest uniform time grid meeting dt <= safety * dx^2 / (2 a_max)."""
    n = math.ceil(horizon * 2 * a_max / (safety * sgrid.dx**2) - 1e-9)
    return TimeGrid(horizon, n)


def stability_check(prob: SpdeProblem, tgrid: TimeGrid, sgrid: SpaceGrid, driver=None) -> Report:
    """Grid compatibility, the dt <= dx^2/(2 max a) bound, and coercivity per step."""
    name = "stability"
    times = tgrid.times
    if not (math.isclose(sgrid.x_lo, prob.x_lo) and math.isclose(sgrid.x_hi, prob.x_hi)):
        return Report(name, math.inf, 0.0, None, "space grid does not span the problem interval")
    if driver is not None:
        try:
            _increments(driver, tgrid)
        except ValueError as exc:
            return Report(name, math.inf, 0.0, None, f"grid mismatch: {exc}")
    bad = prob.coercivity_violation(times)
    if bad is not None:
        t_bad, why = bad
        return Report(name, math.inf, 0.0, (float(t_bad), None), why)
    a, _ = prob.coefficients(times)
    limit = sgrid.dx**2 / (2 * a.max())
    excess = tgrid.dt / limit - 1.0
    if excess > 1e-12:
        j = int(np.argmax(a))
        return Report(name, excess, 0.0, (float(times[j]), None),
                      f"CFL: dt={tgrid.dt:.3e} exceeds dx^2/(2 max a)={limit:.3e}")
    return Report(name, 0.0, 0.0, None, "ok")


def solve_spde(prob: SpdeProblem, tgrid: TimeGrid, sgrid: SpaceGrid, driver,
               save_every: int = 1) -> FieldSolution:
    """Time-step the equation driven by ``driver``.

    ``driver`` is a SamplePath on ``tgrid`` or an array of Wiener increments of
    shape (N,) or (members, N); the latter solves an ensemble in one sweep.
    """
    rep = stability_check(prob, tgrid, sgrid, driver)
    if not rep.passed:
        raise ValueError(f"rejected problem: {rep.context}")
    dw = _increments(driver, tgrid)
    single = dw.ndim == 1
    dw2 = dw[None] if single else dw
    k = dw2.shape[0]

    times = tgrid.times
    x = sgrid.nodes
    xin = x[1:-1]
    dt, dx = tgrid.dt, sgrid.dx
    a, sigma = prob.coefficients(times)
    if prob.vanish_beyond_one:
        far = x >= 1.0
        for fn in (prob.f, prob.g):
            if fn is not None and np.any(eval_field(fn, times[:, None], x[None, far]) != 0):
                raise ValueError("f and g must vanish for x >= 1")

    u = np.empty((k, x.size))
    u[:] = prob.initial(x)
    u[:, 0], u[:, -1] = prob.boundary(times[0])
    n_rows = tgrid.n_steps // save_every + 1
    out = np.empty((k, n_rows, x.size))
    out[:, 0] = u

    n_in = x.size - 2
    bands_for = None
    for n in range(tgrid.n_steps):
        r = a[n] * dt / (4 * dx * dx)
        if bands_for != r:
            sub = np.full(n_in, -r)
            diag = np.full(n_in, 1 + 2 * r)
            sup = np.full(n_in, -r)
            bands_for = r
        lap = u[:, 2:] - 2 * u[:, 1:-1] + u[:, :-2]
        rhs = u[:, 1:-1] + r * lap
        if prob.f is not None:
            rhs += dt * eval_field(prob.f, times[n], xin)
        noise = sigma[n] * (u[:, 2:] - u[:, :-2]) / (2 * dx)
        if prob.g is not None:
            noise = noise + eval_field(prob.g, times[n], xin)
        rhs += noise * dw2[:, n:n + 1]
        lo, hi = prob.boundary(times[n + 1])
        rhs[:, 0] += r * lo
        rhs[:, -1] += r * hi
        u[:, 1:-1] = solve_tridiagonal(sub, diag, sup, rhs)
        u[:, 0], u[:, -1] = lo, hi
        if (n + 1) % save_every == 0:
            out[:, (n + 1) // save_every] = u

    values = out[0] if single else out
    return FieldSolution(prob, tgrid, sgrid, values, np.array(dw), save_every)


def solve_deterministic(prob: SpdeProblem, tgrid: TimeGrid, sgrid: SpaceGrid,
                        save_every: int = 1) -> FieldSolution:
    """Solve with zero noise increments."""
    return solve_spde(prob, tgrid, sgrid, np.zeros(tgrid.n_steps), save_every)


@dataclass(frozen=True)
class EnergyBalance:
    """Running terms of ||u+_t||^2 = ||u+_0||^2 + int h ds + martingale.

    Arrays have one entry per time node (leading member axis for ensembles).
    """

    energy: np.ndarray
    drift: np.ndarray
    ito: np.ndarray
    martingale: np.ndarray

    @property
    def residual(self) -> np.ndarray:
        return self.energy - self.energy[..., :1] - self.drift - self.ito - self.martingale

    @property
    def relative_residual(self) -> np.ndarray:
        e0 = np.maximum(self.energy[..., :1], np.finfo(float).tiny)
        return np.abs(self.residual) / e0


def energy_residual(sol: FieldSolution, prob: SpdeProblem | None = None) -> EnergyBalance:
    """Discrete positive-part energy identity along a solution.

    The second-order term enters in divergence form, contributing
    -a ||D (u_mid)+||^2 at the step midpoint.  With N u = sigma D_c u + g at
    the left end of the step, the Ito correction is (1_{u>0} A^-1 N u, 1_{u>0} N u) dt,
    A being the implicit matrix, and the martingale increment is 2 (u+, N u) dw.
    """
    prob = sol.problem if prob is None else prob
    if sol.save_every != 1:
        raise ValueError("energy residual needs every time step saved")
    if prob is not sol.problem and (prob.x_lo, prob.x_hi) != (sol.problem.x_lo, sol.problem.x_hi):
        raise ValueError("problem and solution live on different grids")
    u = sol.stack()
    dw = sol.noise if sol.ensemble else sol.noise[None]
    times = sol.tgrid.times
    dt, dx = sol.tgrid.dt, sol.sgrid.dx
    xin = sol.x[1:-1]
    a, sigma = prob.coefficients(times)

    pos = np.maximum(u, 0.0)
    energy = (pos[..., 1:-1] ** 2).sum(axis=-1) * dx

    mid = 0.5 * (u[:, 1:] + u[:, :-1])
    grad_mid = np.diff(np.maximum(mid, 0.0), axis=-1) / dx
    f_vals = eval_field(prob.f, times[:-1, None], xin[None, :])
    drift_step = (-a[:-1] * (grad_mid**2).sum(axis=-1) * dx
                  + 2 * (np.maximum(mid[..., 1:-1], 0.0) * f_vals).sum(axis=-1) * dx) * dt

    left = u[:, :-1]
    g_vals = eval_field(prob.g, times[:-1, None], xin[None, :])
    noise = sigma[:-1, None] * (left[..., 2:] - left[..., :-2]) / (2 * dx) + g_vals
    ind = left[..., 1:-1] > 0
    # the implicit solve also acts on the noise kick, so the discrete quadratic
    # variation is (A^-1 N u, N u) dt rather than ||N u||^2 dt
    r = a[:-1] * dt / (4 * dx * dx)
    smoothed = np.empty_like(noise)
    n_in = xin.size
    for rv in np.unique(r):
        cols = np.flatnonzero(r == rv)
        block = noise[:, cols].reshape(-1, n_in)
        res = solve_tridiagonal(np.full(n_in, -rv), np.full(n_in, 1 + 2 * rv), np.full(n_in, -rv), block)
        smoothed[:, cols] = res.reshape(noise.shape[0], cols.size, n_in)
    ito_step = (smoothed * ind * noise * ind).sum(axis=-1) * dx * dt
    mart_step = 2 * (pos[:, :-1, 1:-1] * noise).sum(axis=-1) * dx * dw

    def running(step):
        return np.concatenate([np.zeros(step.shape[:-1] + (1,)), np.cumsum(step, axis=-1)], axis=-1)

    terms = [energy, running(drift_step), running(ito_step), running(mart_step)]
    if not sol.ensemble:
        terms = [t[0] for t in terms]
    return EnergyBalance(*terms)


_MAGIC = b"SPDF"
_DTYPES = {b"f8\0\0": np.dtype("<f8"), b"f4\0\0": np.dtype("<f4")}


def write_field_csv(sol: FieldSolution, fh) -> None:
    """Rows (t, x, u); ensembles get a leading member column."""
    t = sol.times
    x = sol.x
    if sol.ensemble:
        fh.write("member,t,x,u\n")
        for k, vals in enumerate(sol.values):
            for i, ti in enumerate(t):
                for xj, uij in zip(x, vals[i]):
                    fh.write(f"{k},{float(ti)!r},{float(xj)!r},{float(uij)!r}\n")
    else:
        fh.write("t,x,u\n")
        for i, ti in enumerate(t):
            for xj, uij in zip(x, sol.values[i]):
                fh.write(f"{float(ti)!r},{float(xj)!r},{float(uij)!r}\n")


def write_field_binary(values: np.ndarray, path, dtype="f8") -> None:
    """Row-major dump of an (N+1, M+1) array behind a 16-byte header.

    Header: magic b"SPDF", N and M as little-endian uint32, dtype tag.
    """
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("binary dump takes one field, shape (N+1, M+1)")
    tag = dtype.encode().ljust(4, b"\0")
    if tag not in _DTYPES:
        raise ValueError(f"unsupported dtype {dtype}")
    n, m = values.shape[0] - 1, values.shape[1] - 1
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII4s", _MAGIC, n, m, tag))
        fh.write(np.ascontiguousarray(values, dtype=_DTYPES[tag]).tobytes())


def read_field_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, n, m, tag = struct.unpack("<4sII4s", fh.read(16))
        if magic != _MAGIC or tag not in _DTYPES:
            raise ValueError("not a field dump")
        data = np.frombuffer(fh.read(), dtype=_DTYPES[tag])
    if data.size != (n + 1) * (m + 1):
        raise ValueError("truncated field dump")
    return data.reshape(n + 1, m + 1).astype(float)
