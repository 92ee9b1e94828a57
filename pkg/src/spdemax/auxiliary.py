"""Strip hitting probabilities above a continuous boundary path.

The strip of width W = 2**(-m/2) sitting on a boundary path x is
Q_m = {(s, y) : s >= 0, x_s < y < x_s + W}.  A point started at
(t, x_t + x) runs backwards in time as y_s = x_t + x + sqrt(delta) w_s and
r_m(t, x) is the probability that it leaves Q_m through the upper edge.
Leaving through the lower edge or through the time boundary s = t counts as
failure.

The per-level contraction factor

    gamma(c, d, delta) = 1 - P(min_{s<=delta/2} w <= -c - d/sqrt2,
                               max_{s<=delta/2} w <= d - d/sqrt2)

bounds r_m through the dyadic level counts of the boundary path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .paths import (
    McEstimate,
    McParams,
    SamplePath,
    TimeGrid,
    m_minus,
    wiener_block,
)
from .rng import NormalStreams, sample_blocks

SQRT2 = math.sqrt(2.0)
_CHUNK = 512


def strip_width(m: int) -> float:
    return 2.0 ** (-m / 2)


# --- gamma ------------------------------------------------------------------

def gamma_lower_bound(c: float, d: float) -> float:
    """(c + d/sqrt2) / (c + d): gambler's-ruin lower bound for gamma."""
    if c < 0:
        raise ValueError("c must be nonnegative")
    if not d > 0:
        raise ValueError("d must be positive")
    return (c + d / SQRT2) / (c + d)


def estimate_gamma(c: float, d: float, delta: float, mc: McParams) -> McEstimate:
    """Monte Carlo gamma(c, d, delta) with discrete monitoring on [0, delta/2]."""
    gamma_lower_bound(c, d)
    if not delta > 0:
        raise ValueError("delta must be positive")
    if mc.n_samples < 100:
        raise ValueError("estimate_gamma needs at least 100 samples")
    horizon = delta / 2
    dt = mc.dt if mc.dt is not None else horizon / 4096
    if dt > horizon:
        raise ValueError("time step does not resolve delta/2")
    grid = TimeGrid.from_step(horizon, dt)
    low, high = -c - d / SQRT2, d - d / SQRT2
    keep = np.empty(mc.n_samples)
    for idx in sample_blocks(mc.n_samples, mc.block):
        w = wiener_block(grid, mc.seed, idx)
        event = (w.min(axis=1) <= low) & (w.max(axis=1) <= high)
        keep[idx] = ~event
    return McEstimate.from_samples(keep, mc.seed, dt=grid.dt)


# --- dyadic indices and the hitting bound ----------------------------------

def dyadic_indices(y: float, d_arg: float) -> tuple[int, int]:
    """n(y) = [(-2 log2 y)_+] and k(d) = 2 + [(2 log2 d)_+]."""
    if not (y > 0 and d_arg > 0):
        raise ValueError("arguments must be positive")
    n = int(math.floor(max(-2.0 * math.log2(y), 0.0)))
    k = 2 + int(math.floor(max(2.0 * math.log2(d_arg), 0.0)))
    return n, k


@dataclass(frozen=True)
class StripProblem:
    boundary: SamplePath
    m: int
    t: float
    x: float
    delta: float = 1.0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 0:
            raise ValueError("m must be a nonnegative integer")
        if not 0 < self.x < strip_width(self.m):
            raise ValueError(f"x={self.x} outside (0, {strip_width(self.m)})")
        if self.t < 0 or self.t > self.boundary.grid.horizon * (1 + 1e-9):
            raise ValueError("t outside the boundary path's horizon")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def width(self) -> float:
        return strip_width(self.m)


def hitting_exponent(prob: StripProblem, c: float, d: float) -> tuple[int, int, int]:
    """(exponent, n, k) with exponent = M_{m+n} - M_{m-1} - k at (t) of the boundary."""
    if not (c > 0 and d > 0):
        raise ValueError("c and d must be positive")
    n, _ = dyadic_indices(2.0 ** (prob.m / 2) * prob.x / d, 1.0)
    _, k = dyadic_indices(1.0, c + d)
    top = prob.m + n
    if prob.boundary.grid.dt > 2.0 ** -top / 8 * (1 + 1e-9):
        raise ValueError(f"boundary grid too coarse for dyadic level {top}")
    path = prob.boundary
    count = m_minus(path, top, c, prob.t) - m_minus(path, prob.m - 1, c, prob.t)
    return count - k, n, k


def bound_r_m(prob: StripProblem, c: float, d: float, gamma: float | None = None,
              mc: McParams | None = None) -> float:
    """gamma ** (M_{m+n} - M_{m-1} - k); values above 1 are returned as is."""
    if gamma is None:
        if mc is None:
            raise ValueError("need a gamma value or Monte Carlo parameters")
        gamma = estimate_gamma(c, d, prob.delta, mc).value
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    exponent, _, _ = hitting_exponent(prob, c, d)
    return gamma ** exponent


# --- strip exit Monte Carlo -------------------------------------------------

def default_strip_step(m: int) -> float:
    """Largest power of two not above 2**-m * 1e-3."""
    return 2.0 ** math.floor(math.log2(2.0 ** -m * 1e-3))


def estimate_r_m(prob: StripProblem, mc: McParams) -> McEstimate:
    """Monte Carlo r_m(t, x) with per-step exit detection.

    The boundary is read by linear interpolation at t - j*h, which is exact
    sampling whenever h is a multiple of the boundary's grid step.  Sample i
    always uses stream (mc.seed, i), so estimates at different x (or on a
    rescaled problem) are coupled through common random numbers.
    """
    h = mc.dt if mc.dt is not None else default_strip_step(prob.m)
    n_steps = int(math.floor(prob.t / h * (1 + 1e-12)))
    times = prob.t - h * np.arange(n_steps + 1)
    bnd = np.interp(np.maximum(times, 0.0), prob.boundary.grid.times, prob.boundary.values)
    # start offset relative to the moving lower edge, minus the edge's drift
    rel = bnd[0] + prob.x - bnd
    width = prob.width
    scale = math.sqrt(h * prob.delta)

    success = np.zeros(mc.n_samples)
    exit_step = np.full(mc.n_samples, -1)
    for idx in sample_blocks(mc.n_samples, mc.block):
        streams = NormalStreams(mc.seed, idx)
        pos = np.zeros(len(idx))
        alive = np.arange(len(idx))
        j0 = 0
        while alive.size and j0 < n_steps:
            n = min(_CHUNK, n_steps - j0)
            z = streams.draw(n, alive)
            walk = pos[alive, None] + scale * np.cumsum(z, axis=1)
            z_rel = walk + rel[None, j0 + 1:j0 + 1 + n]
            out = (z_rel <= 0.0) | (z_rel >= width)
            hit = out.any(axis=1)
            first = out.argmax(axis=1)
            rows = alive[hit]
            up = z_rel[hit, first[hit]] >= width
            success[idx[rows]] = up
            exit_step[idx[rows]] = j0 + 1 + first[hit]
            pos[alive] = walk[:, -1]
            alive = alive[~hit]
            j0 += n
    return McEstimate.from_samples(success, mc.seed, dt=h, exit_step=exit_step, indicators=success)


def rescale_boundary(path: SamplePath, m: int) -> SamplePath:
    """s -> 2**(m/2) * x(s * 2**-m) on the grid dilated by 2**m."""
    if int(m) != m or m < 0:
        raise ValueError("m must be a nonnegative integer")
    horizon = path.grid.horizon * 2.0 ** m
    if not math.isfinite(horizon):
        raise ValueError("dilated horizon not representable")
    return SamplePath(TimeGrid(horizon, path.grid.n_steps), path.values * 2.0 ** (m / 2), path.seed)


# --- time change ------------------------------------------------------------

@dataclass(frozen=True)
class TimeChange:
    """psi on the driver grid, its inverse phi on the psi-time grid, and xi there."""

    times: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    xi: SamplePath

    def psi_at(self, t):
        return np.interp(t, self.times, self.psi)


def _series(coef, n: int) -> np.ndarray:
    arr = np.asarray(coef, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"coefficient series must have length {n}")
    return arr


def time_change(a_proc, sigma_proc, driver: SamplePath, n_target: int | None = None) -> TimeChange:
    """psi_t = int_0^t (a - sigma^2) ds, phi = psi^{-1}, xi_tau = int_0^{phi_tau} sigma dw."""
    grid = driver.grid
    a = _series(a_proc, grid.n_steps + 1)
    sigma = _series(sigma_proc, grid.n_steps + 1)
    rate = a - sigma**2
    if np.any(rate <= 0):
        j = int(np.argmax(rate <= 0))
        raise ValueError(f"a - sigma^2 must be positive; fails at t={grid.times[j]:g}")
    t = grid.times
    psi = cumulative_trapezoid(rate, t, initial=0.0)
    target = TimeGrid(float(psi[-1]), n_target or grid.n_steps)
    phi = np.interp(target.times, psi, t)
    ito = np.concatenate(([0.0], np.cumsum(sigma[:-1] * np.diff(driver.values))))
    xi = SamplePath(target, np.interp(phi, t, ito), driver.seed)
    return TimeChange(t, psi, phi, xi)


def v_m_representation(a_proc, sigma_proc, driver: SamplePath, m: int, t: float, x: float,
                       mc: McParams, n_target: int | None = None) -> McEstimate:
    """v_m(t, x) = r_m(xi, psi_t, x) with unit diffusion scale.

    Boundary values are returned exactly: 0 at x <= 0, 1 at x >= 2**(-m/2).
    """
    width = strip_width(m)
    if x >= width:
        return McEstimate(1.0, 0.0, mc.n_samples, mc.seed)
    if x <= 0:
        return McEstimate(0.0, 0.0, mc.n_samples, mc.seed)
    tc = time_change(a_proc, sigma_proc, driver, n_target)
    tau = float(tc.psi_at(t))
    return estimate_r_m(StripProblem(tc.xi, m, tau, x, 1.0), mc)


# --- decay statistic --------------------------------------------------------

@dataclass(frozen=True)
class DecayParams:
    p: float
    nu: float
    alpha: float
    chi: float

    def __post_init__(self):
        if not self.p > 2:
            raise ValueError("p must exceed 2")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.chi > 0:
            raise ValueError("chi must be positive")
        if not 1 < self.nu * self.p < self.p * self.chi + 1:
            raise ValueError("need 1 < nu*p < p*chi + 1")

    @classmethod
    def from_gamma(cls, p: float, nu: float, alpha: float, gamma: float) -> "DecayParams":
        """chi = -2 alpha log2 gamma."""
        return cls(p, nu, alpha, -2.0 * alpha * math.log2(gamma))


def log_nodes(m: int, per_decade: int = 64, cutoff: float = 1e-4) -> np.ndarray:
    """Log-spaced x nodes from W*cutoff to W, W = 2**(-m/2)."""
    width = strip_width(m)
    decades = -math.log10(cutoff)
    n = int(round(decades * per_decade)) + 1
    return width * np.logspace(-decades, 0.0, n)


def decay_statistic(x, r, params: DecayParams, m: int) -> float:
    """2**(-m(nu p - 1)/(2 alpha)) * int x**(-nu p) r(x)**p dx over the sampled x.

    Trapezoid rule in log x over the supplied nodes.
    """
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    if x.shape != r.shape:
        raise ValueError("x and r differ in shape")
    if np.any(x <= 0) or np.any(x > strip_width(m) * (1 + 1e-12)):
        raise ValueError("samples must lie in (0, 2^(-m/2)]")
    order = np.argsort(x)
    x, r = x[order], np.clip(r[order], 0.0, None)
    if x.size == 1:
        return 0.0
    p, nup = params.p, params.nu * params.p
    integrand = x ** (1.0 - nup) * r**p
    integral = float(np.trapezoid(integrand, np.log(x)))
    return 2.0 ** (-m * (nup - 1) / (2 * params.alpha)) * integral


def pi_statistic(samples, params: DecayParams) -> float:
    """sup of decay_statistic over supplied (m, t, x, r) entries."""
    samples = list(samples)
    if not samples:
        raise ValueError("no samples")
    return max(decay_statistic(x, r, params, m) for m, _t, x, r in samples)
