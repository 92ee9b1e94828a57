"""Time grids, Wiener paths and dyadic backward-oscillation statistics.

For a continuous path x on [0, inf), extended by x_s = x_0 for s <= 0,

    delta_minus(x, n, t) = 2**(n/2) * osc of x over [t - 2**-n, t]
    m_minus(x, n, c, t)  = #{k = 0..n : delta_minus(x, k, t) <= c}

with m_minus = 0 for negative n.  All oscillations are taken over grid
points of the path only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d
from scipy.special import erfc

from .rng import NormalStreams, sample_blocks, stream

# relative slack when snapping real times onto grid indices
_SNAP = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_j = j * horizon / n_steps, j = 0..n_steps."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be an integer >= 1, got {self.n_steps}")

    @classmethod
    def from_step(cls, horizon: float, dt: float) -> "TimeGrid":
        """Grid with step ``dt``; ``horizon`` is rounded up to a whole step."""
        n = int(math.ceil(horizon / dt * (1 - _SNAP)))
        return cls(n * dt, max(n, 1))

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def index_floor(self, t: float) -> int:
        """Largest j with t_j <= t (grid-snapped)."""
        return int(math.floor(t / self.dt + _SNAP))

    def index_ceil(self, t: float) -> int:
        """Smallest j with t_j >= t (grid-snapped)."""
        return int(math.ceil(t / self.dt - _SNAP))


@dataclass(frozen=True)
class SamplePath:
    grid: TimeGrid
    values: np.ndarray
    seed: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_steps + 1,):
            raise ValueError(
                f"expected {self.grid.n_steps + 1} values, got shape {values.shape}"
            )
        object.__setattr__(self, "values", values)

    def __call__(self, s):
        """Linear interpolation; s <= 0 returns x_0, s beyond the horizon is rejected."""
        s = np.asarray(s, dtype=float)
        if np.any(s > self.grid.horizon * (1 + _SNAP)):
            raise ValueError("evaluation beyond the path horizon")
        return np.interp(s, self.grid.times, self.values)

    @classmethod
    def constant(cls, grid: TimeGrid, value: float = 0.0) -> "SamplePath":
        return cls(grid, np.full(grid.n_steps + 1, float(value)))

    @classmethod
    def from_function(cls, grid: TimeGrid, fn) -> "SamplePath":
        return cls(grid, np.asarray(fn(grid.times), dtype=float))


@dataclass(frozen=True)
class McParams:
    """Monte Carlo controls.  ``dt`` overrides an estimator's default step."""

    n_samples: int
    seed: int = 0
    dt: float | None = None
    block: int = 2048

    def __post_init__(self):
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ValueError(f"n_samples must be a positive integer, got {self.n_samples}")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.block < 1:
            raise ValueError("block must be positive")


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n_samples: int
    seed: int
    extra: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_samples(cls, samples, seed: int, **extra) -> "McEstimate":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(samples.mean()), se, n, seed, extra)


# --- simulation -------------------------------------------------------------

def simulate_wiener(grid: TimeGrid, seed: int, index: int = 0) -> SamplePath:
    """Wiener path on ``grid`` from stream (seed, index); starts at 0."""
    z = stream(seed, index).standard_normal(grid.n_steps)
    values = np.concatenate(([0.0], np.cumsum(z) * math.sqrt(grid.dt)))
    return SamplePath(grid, values, seed)


def wiener_block(grid: TimeGrid, seed: int, indices) -> np.ndarray:
    """Paths for the given sample indices as rows of a (k, n_steps + 1) array.

    Row ``i`` equals ``simulate_wiener(grid, seed, indices[i]).values``.
    """
    z = NormalStreams(seed, indices).draw(grid.n_steps)
    out = np.zeros((len(z), grid.n_steps + 1))
    np.cumsum(z, axis=1, out=out[:, 1:])
    out[:, 1:] *= math.sqrt(grid.dt)
    return out


def reflection_probability(level: float, horizon: float = 0.5) -> float:
    """P(min_{s<=horizon} w_s <= -level) = erfc(level / sqrt(2 horizon))."""
    if level < 0:
        raise ValueError("level must be nonnegative")
    return float(erfc(level / math.sqrt(2.0 * horizon)))


def estimate_min_hitting(level: float, horizon: float, mc: McParams) -> McEstimate:
    """Monte Carlo P(min_{s<=horizon} w_s <= -level), discrete monitoring."""
    dt = mc.dt if mc.dt is not None else horizon / 4096
    grid = TimeGrid.from_step(horizon, dt)
    hits = np.empty(mc.n_samples)
    for idx in sample_blocks(mc.n_samples, mc.block):
        w = wiener_block(grid, mc.seed, idx)
        hits[idx] = w.min(axis=1) <= -level
    return McEstimate.from_samples(hits, mc.seed, dt=grid.dt)


# --- oscillation statistics ------------------------------------------------

def oscillation(path: SamplePath, t_lo: float, t_hi: float) -> float:
    """max - min of the path over grid points in [t_lo, t_hi].

    Times below zero take the value x_0.  Fewer than two points give 0.
    """
    if t_lo > t_hi:
        raise ValueError(f"t_lo={t_lo} exceeds t_hi={t_hi}")
    g = path.grid
    hi = min(g.index_floor(t_hi), g.n_steps)
    lo = max(g.index_ceil(t_lo), 0)
    # pre-history equals x_0, which is already grid point 0
    vals = path.values[lo:hi + 1]
    return float(vals.max() - vals.min()) if vals.size > 1 else 0.0


def delta_minus(path: SamplePath, n: int, t: float) -> float:
    if n < 0:
        raise ValueError("n must be nonnegative")
    if t < 0:
        raise ValueError("t must be nonnegative")
    return 2.0 ** (n / 2) * oscillation(path, t - 2.0 ** -n, t)


def m_minus(path: SamplePath, n: int, c: float, t: float) -> int:
    if not c > 0:
        raise ValueError("c must be positive")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if n < 0:
        return 0
    return sum(delta_minus(path, k, t) <= c for k in range(n + 1))


def _window_steps(dt: float, n: int) -> int:
    return int(math.floor(2.0 ** -n / dt + _SNAP))


def backward_oscillation(values: np.ndarray, steps: int) -> np.ndarray:
    """osc over the last ``steps + 1`` samples at every index (along the last axis).

    Left of index 0 the array is continued by its first value.
    """
    if steps <= 0:
        return np.zeros_like(values)
    size = steps + 1
    origin = (size - 1) // 2
    hi = maximum_filter1d(values, size, axis=-1, origin=origin, mode="nearest")
    lo = minimum_filter1d(values, size, axis=-1, origin=origin, mode="nearest")
    return hi - lo


def dyadic_deltas(path: SamplePath, n_max: int) -> np.ndarray:
    """delta_minus(path, k, t_j) for k = 0..n_max at every grid time; shape (n_max+1, N+1)."""
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    dt = path.grid.dt
    return np.stack([
        2.0 ** (k / 2) * backward_oscillation(path.values, _window_steps(dt, k))
        for k in range(n_max + 1)
    ])


def m_minus_series(path: SamplePath, n: int, c: float) -> np.ndarray:
    """m_minus(path, n, c, t_j) at every grid time."""
    if not c > 0:
        raise ValueError("c must be positive")
    if n < 0:
        return np.zeros(path.grid.n_steps + 1, dtype=int)
    return (dyadic_deltas(path, n) <= c).sum(axis=0)


def alpha0_path_value(path: SamplePath, c: float, n_max: int, t_max: float | None = None) -> float:
    """inf over grid t in [0, t_max] of m_minus(path, n_max, c, t) / (n_max + 1)."""
    _check_resolution(path.grid.dt, n_max)
    j = path.grid.n_steps if t_max is None else path.grid.index_floor(t_max)
    counts = m_minus_series(path, n_max, c)[: j + 1]
    return float(counts.min() / (n_max + 1))


def _check_resolution(dt: float, n_max: int):
    if dt > 2.0 ** -n_max / 8 * (1 + _SNAP):
        raise ValueError(
            f"grid step {dt:g} too coarse for level {n_max}; need dt <= 2^-{n_max}/8"
        )


def estimate_alpha0(c: float, horizon: float, n_max: int, mc: McParams) -> McEstimate:
    """Median over Wiener paths of the normalised worst-case level count.

    The dispersion is reported as the asymptotic standard error of the
    median, 1.2533 * (1.4826 * MAD) / sqrt(n).
    """
    if not c > 0:
        raise ValueError("c must be positive")
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    dt = mc.dt if mc.dt is not None else 2.0 ** -n_max / 8
    _check_resolution(dt, n_max)
    grid = TimeGrid.from_step(horizon, dt)
    vals = np.array([
        alpha0_path_value(simulate_wiener(grid, mc.seed, i), c, n_max, horizon)
        for i in range(mc.n_samples)
    ])
    med = float(np.median(vals))
    mad = float(np.median(np.abs(vals - med)))
    se = 1.2533 * 1.4826 * mad / math.sqrt(mc.n_samples)
    return McEstimate(med, se, mc.n_samples, mc.seed, {"per_path": vals, "dt": dt})


def write_path_stats(fh, paths, n_max: int, c: float, stride: int = 1):
    """CSV rows (path_index, n, t, delta_minus, m_minus) for each path, level and grid time."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["path_index", "n", "t", "delta_minus", "m_minus"])
    for p_idx, path in enumerate(paths):
        deltas = dyadic_deltas(path, n_max)
        counts = np.cumsum(deltas <= c, axis=0)
        times = path.grid.times
        for n in range(n_max + 1):
            for j in range(0, len(times), stride):
                w.writerow([p_idx, n, repr(float(times[j])), repr(float(deltas[n, j])),
                            int(counts[n, j])])
