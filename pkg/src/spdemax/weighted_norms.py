"""Weighted L_p norms with weight x^(theta-1) and x-scaled derivatives.

Difference quotients stand in for derivatives.  Zeroth and first order terms
use cell centres, the second order term uses interior nodes, so the weight is
never evaluated at x = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .csvout import write_rows
from .report import Report
from .spde_fd import FieldSolution, eval_field

LOG2_GAMMA_FLOOR = 1 / math.sqrt(2)


@dataclass(frozen=True)
class NormParams:
    p: float
    theta: float
    order: int = 0
    tau: float = 1.0

    def __post_init__(self):
        if not self.p >= 2:
            raise ValueError("p must be at least 2")
        if not 0 < self.theta < self.p:
            raise ValueError("theta must lie in (0, p)")
        if self.order not in (0, 1, 2):
            raise ValueError("order must be 0, 1 or 2")
        if not self.tau > 0:
            raise ValueError("tau must be positive")


def _time_integral(rows: np.ndarray, times: np.ndarray, tau) -> np.ndarray:
    """int_0^tau of per-row values (..., rows), trapezoid with a linear last piece.

    An array ``tau`` gives one horizon per leading member.
    """
    if np.ndim(tau) > 0:
        return np.array([_time_integral(r, times, float(t)) for r, t in zip(rows, tau)])
    if tau > times[-1] * (1 + 1e-12):
        raise ValueError("tau beyond the saved horizon")
    cum = cumulative_trapezoid(rows, times, axis=-1, initial=0.0)
    i = int(np.searchsorted(times, tau, side="right")) - 1
    if i >= times.size - 1:
        return cum[..., -1]
    h = tau - times[i]
    slope = (rows[..., i + 1] - rows[..., i]) / (times[i + 1] - times[i])
    return cum[..., i] + h * rows[..., i] + 0.5 * h * h * slope


def norm_terms(values, times, x, params: NormParams, taus=None) -> list[float]:
    """E int int x^(theta-1) |M^k D^k v|^p dx dt for k = 0..order (p-th powers).

    ``values`` has shape (rows, nodes) or (members, rows, nodes) on nodes ``x``
    starting at 0.  ``taus`` optionally replaces params.tau by one horizon per
    member, as for random stopping times.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = v[None]
    x = np.asarray(x, dtype=float)
    if x[0] < 0 or v.shape[-1] != x.size:
        raise ValueError("field must sit on nodes of (0, x_hi)")
    dx = np.diff(x)
    p, th = params.p, params.theta
    xc = 0.5 * (x[1:] + x[:-1])
    wc = xc ** (th - 1) * dx

    def integrate(dens, weights):
        space = (np.abs(dens) ** p * weights).sum(axis=-1)
        return float(np.mean(_time_integral(space, times, params.tau if taus is None else taus)))

    terms = [integrate(0.5 * (v[..., 1:] + v[..., :-1]), wc)]
    if params.order >= 1:
        terms.append(integrate(xc * np.diff(v, axis=-1) / dx, wc))
    if params.order >= 2:
        xi = x[1:-1]
        h = 0.5 * (dx[1:] + dx[:-1])
        d2 = 2 * (dx[:-1] * v[..., 2:] - (dx[:-1] + dx[1:]) * v[..., 1:-1] + dx[1:] * v[..., :-2]) / (
            dx[:-1] * dx[1:] * (dx[:-1] + dx[1:]))
        # right end node takes half a cell and the neighbouring quotient; the
        # left one carries x^(2p+theta-1) and is dropped
        xi = np.append(xi, x[-1])
        h = np.append(h, 0.5 * dx[-1])
        d2 = np.concatenate([d2, d2[..., -1:]], axis=-1)
        terms.append(integrate(xi**2 * d2, xi ** (th - 1) * h))
    return terms


def weighted_norm_values(values, times, x, params: NormParams) -> float:
    """Sum of the L_{p,theta} norms of v, M D v, M^2 D^2 v up to ``order``."""
    return float(sum(t ** (1 / params.p) for t in norm_terms(values, times, x, params)))


def weighted_norm(sol: FieldSolution, params: NormParams) -> float:
    if sol.sgrid.x_lo != 0.0:
        raise ValueError("field must live on (0, x_hi)")
    return weighted_norm_values(sol.values, sol.times, sol.x, params)


@dataclass(frozen=True)
class ExponentConstants:
    theta0: float
    chi: float
    epsilon0: float
    mu_sup: float
    p: float
    alpha: float
    c: float
    delta1: float
    gamma_value: float
    degenerate: bool = False


def exponent_constants(p, alpha, c, delta1, gamma_value) -> ExponentConstants:
    """theta0 = p(1 + 2 alpha log2 gamma), chi = eps0 = -2 alpha log2 gamma,
    mu_sup = p(1 + 2 log2 gamma) - 2.

    ``alpha`` stands for alpha0(c sqrt(delta1)) and ``gamma_value`` for gamma(c).
    gamma = 1 gives chi = eps0 = 0 and is flagged as degenerate.
    """
    if not p > 2:
        raise ValueError("p must exceed 2")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not LOG2_GAMMA_FLOOR < gamma_value <= 1:
        raise ValueError("gamma must lie in (1/sqrt(2), 1]")
    lg = math.log2(gamma_value)
    theta0 = p * (1 + 2 * alpha * lg)
    chi = -2 * alpha * lg
    mu_sup = p * (1 + 2 * lg) - 2
    other = theta0 - 2 + 2 * p * (1 - alpha) * lg
    if abs(mu_sup - other) > 1e-12 * max(1.0, abs(mu_sup)):
        raise ArithmeticError("mu bound expressions disagree")
    return ExponentConstants(theta0, chi, chi, mu_sup, p, alpha, c, delta1, gamma_value,
                             degenerate=gamma_value == 1)


def fit_decay_exponent(field, t: float | None, window, min_points: int = 8) -> float:
    """Least-squares slope of log v against log x over grid points in ``window``.

    ``field`` is a FieldSolution (the mean over members at the row nearest t
    for ensembles) or a pair (x, v) of 1-D arrays.  The window must lie in
    (0, x_hi / 2].
    """
    if isinstance(field, FieldSolution):
        x = field.x
        row = field.row(t)
        v = field.mean()[row] if field.ensemble else field.values[row]
        x_hi = field.sgrid.x_hi
    else:
        x, v = (np.asarray(a, dtype=float) for a in field)
        x_hi = x[-1]
    lo, hi = window
    if not 0 < lo < hi <= 0.5 * x_hi * (1 + 1e-12):
        raise ValueError("window must lie in (0, x_hi/2]")
    sel = (x >= lo) & (x <= hi)
    if sel.sum() < min_points:
        raise ValueError(f"only {int(sel.sum())} grid points in the window, need {min_points}")
    if np.any(v[sel] <= 0):
        raise ValueError("field must be positive on the window")
    slope, _ = np.polyfit(np.log(x[sel]), np.log(v[sel]), 1)
    return float(slope)


def tau_n(pi_series, n: float, T: float, times=None) -> float:
    """min(T, first t with int_0^t pi ds >= n), trapezoid accumulation.

    ``pi_series`` holds pi at ``times`` (uniform on [0, T] when omitted).
    """
    pi = np.asarray(pi_series, dtype=float)
    if np.any(pi < 0):
        raise ValueError("pi must be nonnegative")
    if n < 1:
        raise ValueError("n must be at least 1")
    times = np.linspace(0.0, T, pi.size) if times is None else np.asarray(times, dtype=float)
    if times.shape != pi.shape:
        raise ValueError("pi series and times differ in length")
    cum = cumulative_trapezoid(pi, times, initial=0.0)
    if cum[-1] <= n:
        return float(T)
    i = int(np.searchsorted(cum, n, side="left"))
    c0 = cum[i - 1]
    t0, t1 = times[i - 1], times[i]
    # the integral is quadratic on the step when pi is linear; solve for the crossing
    a = 0.5 * (pi[i] - pi[i - 1]) / (t1 - t0)
    b = pi[i - 1]
    need = n - c0
    if abs(a) < 1e-300:
        h = need / b
    else:
        h = (-b + math.sqrt(b * b + 4 * a * need)) / (2 * a)
    return float(min(T, t0 + min(max(h, 0.0), t1 - t0)))


@dataclass(frozen=True)
class NormEstimate:
    lhs: float
    rhs: float
    tau: float
    lhs_terms: list = field(default_factory=list)

    @property
    def vacuous(self) -> bool:
        return self.lhs == 0.0 and self.rhs == 0.0

    @property
    def ratio(self) -> float:
        if self.vacuous:
            return 0.0
        return self.lhs / self.rhs if self.rhs > 0 else math.inf

    @property
    def finite(self) -> bool:
        return math.isfinite(self.lhs) and math.isfinite(self.ratio)

    def report(self) -> Report:
        ctx = "vacuous 0/0" if self.vacuous else f"ratio={self.ratio:.6g}"
        return Report("norm_estimate", 0.0 if self.finite else math.inf, 0.0, (self.tau, None), ctx)


def check_norm_estimate(u: FieldSolution, p: float, theta: float, mu: float, tau,
                        constants: ExponentConstants) -> NormEstimate:
    """||M^-1 u||^p_{H^2_{p,theta}(tau)} against ||M f||^p_{L_{p,mu}(tau)} + ||g||^p_{H^1_{p,mu}(tau)}.

    f and g come from the problem of ``u`` and must vanish for x >= 1.  At
    x = 0 the quotient u/x takes its value from the first interior node.
    ``tau`` is a time or one stopping time per ensemble member; the reported
    tau is their mean.
    """
    if constants.p != p:
        raise ValueError("constants were computed for a different p")
    if not constants.theta0 < theta < p:
        raise ValueError(f"need theta0={constants.theta0:.6g} < theta < p")
    if not mu < constants.mu_sup:
        raise ValueError(f"need mu < {constants.mu_sup:.6g}")
    if u.sgrid.x_lo != 0.0:
        raise ValueError("field must live on (0, x_hi)")
    x = u.x
    times = u.times
    prob = u.problem
    f = eval_field(prob.f, times[:, None], x[None, :])
    g = eval_field(prob.g, times[:, None], x[None, :])
    far = x >= 1.0
    if np.any(f[:, far] != 0) or np.any(g[:, far] != 0):
        raise ValueError("f and g must vanish for x >= 1")

    q = np.empty_like(u.stack())
    q[..., 1:] = u.stack()[..., 1:] / x[1:]
    q[..., 0] = q[..., 1]
    taus = np.asarray(tau, dtype=float)
    per_member = taus.ndim > 0
    if per_member and taus.shape != (q.shape[0],):
        raise ValueError("need one stopping time per member")
    t_ref = float(taus.max())
    pt = NormParams(p, theta, 2, t_ref)
    lhs_terms = norm_terms(q, times, x, pt, taus if per_member else None)
    lhs = sum(t ** (1 / p) for t in lhs_terms) ** p
    if not 0 < mu < p:
        raise ValueError("mu must lie in (0, p) for the weighted norms")
    k = q.shape[0]
    fk = np.broadcast_to(x * f, (k,) + f.shape)
    gk = np.broadcast_to(g, (k,) + g.shape)
    tt = taus if per_member else None
    rhs_f = sum(t ** (1 / p) for t in norm_terms(fk, times, x, NormParams(p, mu, 0, t_ref), tt)) ** p
    rhs_g = sum(t ** (1 / p) for t in norm_terms(gk, times, x, NormParams(p, mu, 1, t_ref), tt)) ** p
    return NormEstimate(float(lhs), float(rhs_f + rhs_g), float(taus.mean()), lhs_terms)


def write_norm_rows(fh, rows) -> None:
    """rows of (quantity, p, theta, order, tau, value)."""
    write_rows(fh, ["quantity", "p", "theta", "order", "tau", "value"], rows)


def write_tau_rows(fh, rows) -> None:
    write_rows(fh, ["n", "tau_n"], rows)


def write_fit_rows(fh, rows) -> None:
    """rows of (t, (x_min, x_max), exponent); the window is written as x_min:x_max."""
    write_rows(fh, ["t", "x_window", "fitted_exponent"],
               [(t, f"{float(w[0])!r}:{float(w[1])!r}", e) for t, w, e in rows])
