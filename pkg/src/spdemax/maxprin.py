"""Discrete checks of the sign, comparison, barrier and envelope statements.

Every verifier re-derives its hypotheses from the problem stored in the
solution and refuses inputs that do not satisfy them.  Violations are
reported relative to a problem scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .auxiliary import strip_width
from .report import Report
from .spde_fd import FieldSolution, SpdeProblem, eval_field

TINY = 1e-300


def _field_on_rows(fn, sol: FieldSolution) -> np.ndarray:
    return eval_field(fn, sol.times[:, None], sol.x[None, :])


def _boundary_rows(prob: SpdeProblem, times: np.ndarray) -> np.ndarray:
    return np.array([prob.boundary(t) for t in times])


def _locate(sol: FieldSolution, excess: np.ndarray, scale: float):
    """Worst point of ``excess`` (members, rows, nodes) as (value/scale, (t, x))."""
    flat = int(np.argmax(excess))
    _, i, j = np.unravel_index(flat, excess.shape)
    worst = float(excess.reshape(-1)[flat])
    return max(worst, 0.0) / scale, (float(sol.times[i]), float(sol.x[j]))


def sign_hypotheses(prob: SpdeProblem, sol: FieldSolution) -> list[str]:
    """Failed hypotheses of the sign statement: f <= 0, g = 0, ic <= 0, bc <= 0."""
    failed = []
    if np.any(prob.initial(sol.x) > 0):
        failed.append("ic <= 0")
    if np.any(_boundary_rows(prob, sol.tgrid.times) > 0):
        failed.append("bc <= 0")
    if np.any(_field_on_rows(prob.f, sol) > 0):
        failed.append("f <= 0")
    if np.any(_field_on_rows(prob.g, sol) != 0):
        failed.append("g = 0")
    return failed


def verify_sign(sol: FieldSolution, tol: float = 1e-3) -> Report:
    """max u+ over the grid against tol * (max|ic| + T max|f|)."""
    prob = sol.problem
    failed = sign_hypotheses(prob, sol)
    if failed:
        raise ValueError("sign hypotheses fail: " + ", ".join(failed))
    horizon = sol.tgrid.horizon
    scale = (float(np.max(np.abs(prob.initial(sol.x))))
             + horizon * float(np.max(np.abs(_field_on_rows(prob.f, sol)))) + TINY)
    u = sol.stack()
    viol, at = _locate(sol, u, scale)
    per_member = np.maximum(u.max(axis=(1, 2)), 0.0) / scale
    return Report("sign", viol, tol, at, f"{len(sol)} member(s)", scale,
                  {"per_member": per_member})


def _rho_rows(rho, sol: FieldSolution) -> np.ndarray:
    arr = np.asarray(rho, dtype=float)
    if arr.ndim == 0:
        return np.full(sol.times.shape, float(arr))
    if arr.shape == sol.tgrid.times.shape:
        return arr[:: sol.save_every]
    if arr.shape == sol.times.shape:
        return arr
    raise ValueError("rho must be a scalar or one value per time node")


def _same_setting(u: FieldSolution, v: FieldSolution) -> None:
    if (u.tgrid != v.tgrid or u.sgrid != v.sgrid or u.save_every != v.save_every
            or u.values.shape != v.values.shape):
        raise ValueError("solutions live on different grids")
    if not np.array_equal(u.noise, v.noise):
        raise ValueError("solutions are driven by different noise")
    t = u.tgrid.times
    for cu, cv in zip(u.problem.coefficients(t), v.problem.coefficients(t)):
        if not np.array_equal(cu, cv):
            raise ValueError("solutions have different coefficients a, sigma")


def verify_comparison(u: FieldSolution, u_bar: FieldSolution, rho=1.0, tol: float = 1e-3) -> Report:
    """max (u - rho u_bar)+ against tol * max(|u|, |rho u_bar|).

    Hypotheses, on the grid set {u > rho u_bar} only: f <= rho f_bar,
    g = rho g_bar, u_bar >= 0 where rho increases, rho u_bar >= u at t = 0 and on
    the boundary.  rho must be nonnegative and nondecreasing.
    """
    _same_setting(u, u_bar)
    r = _rho_rows(rho, u)
    if np.any(r < 0) or np.any(np.diff(r) < 0):
        raise ValueError("rho must be nonnegative and nondecreasing")
    uu, ub = u.stack(), u_bar.stack()
    bar = r[None, :, None] * ub
    active = uu > bar
    f_gap = _field_on_rows(u.problem.f, u) - r[:, None] * _field_on_rows(u_bar.problem.f, u)
    g_gap = _field_on_rows(u.problem.g, u) - r[:, None] * _field_on_rows(u_bar.problem.g, u)
    failed = []
    if np.any(active & (f_gap > 0)[None]):
        failed.append("f <= rho f_bar")
    if np.any(active & (g_gap != 0)[None]):
        failed.append("g = rho g_bar")
    rising = np.concatenate([[False], np.diff(r) > 0])
    if np.any(active & rising[None, :, None] & (ub < 0)):
        failed.append("u_bar >= 0 where rho grows")
    if np.any(u.problem.initial(u.x) > r[0] * u_bar.problem.initial(u.x)):
        failed.append("ic ordered")
    full_rho = np.asarray(rho, dtype=float)
    times = u.tgrid.times
    rho_all = np.full(times.shape, float(full_rho)) if full_rho.ndim == 0 else (
        full_rho if full_rho.shape == times.shape else None)
    if rho_all is not None:
        if np.any(_boundary_rows(u.problem, times) > rho_all[:, None] * _boundary_rows(u_bar.problem, times)):
            failed.append("bc ordered")
    elif np.any(uu[..., [0, -1]] > bar[..., [0, -1]]):
        failed.append("bc ordered")
    if failed:
        raise ValueError("comparison hypotheses fail: " + ", ".join(failed))
    scale = max(float(np.max(np.abs(uu))), float(np.max(np.abs(bar)))) + TINY
    viol, at = _locate(u, uu - bar, scale)
    per_member = np.maximum((uu - bar).max(axis=(1, 2)), 0.0) / scale
    return Report("comparison", viol, tol, at, f"{len(u)} member(s)", scale, {"per_member": per_member})


def verify_barrier(u: FieldSolution, one: FieldSolution, tol: float = 1e-3) -> Report:
    """u <= 1 with ``one`` the solution from ic = bc = 1, f = g = 0 under the same noise."""
    rep = verify_comparison(u, one, 1.0, tol)
    return Report("barrier", rep.max_violation, rep.tolerance, rep.location, rep.context,
                  rep.scale, rep.extra)


def envelope_problem(prob: SpdeProblem, m: int) -> SpdeProblem:
    """The v_m problem on (0, 2^{-m/2}) sharing a and sigma with ``prob``."""
    return SpdeProblem(0.0, strip_width(m), prob.a, prob.sigma, bc_lo=0.0, bc_hi=1.0, ic=0.0,
                       delta0=prob.delta0, delta1=prob.delta1)


def verify_envelope(u_m: FieldSolution, v_m: FieldSolution, m: int, tol: float = 1e-2) -> Report:
    """|u(t,x)| <= v_m(t,x) sup_{s<=t} |u(s, W)| + tol * sup|u| for grid x < W = 2^{-m/2}.

    The running sup is taken over saved rows.  ``extra['pass_fraction']`` is
    the share of (member, t, x) points meeting the inequality.
    """
    w = strip_width(m)
    pu, pv = u_m.problem, v_m.problem
    if u_m.tgrid != v_m.tgrid or u_m.save_every != v_m.save_every:
        raise ValueError("u_m and v_m use different time grids")
    if not np.array_equal(u_m.noise, v_m.noise):
        raise ValueError("u_m and v_m are driven by different noise")
    t = u_m.tgrid.times
    for cu, cv in zip(pu.coefficients(t), pv.coefficients(t)):
        if not np.array_equal(cu, cv):
            raise ValueError("u_m and v_m have different coefficients")
    if not (u_m.sgrid.x_lo == 0.0 == v_m.sgrid.x_lo and np.isclose(v_m.sgrid.x_hi, w)
            and np.isclose(u_m.sgrid.dx, v_m.sgrid.dx) and u_m.sgrid.x_hi > w):
        raise ValueError("grids must share dx, start at 0, and v_m must end at 2^{-m/2}")
    inner = u_m.x <= w * (1 + 1e-12)
    failed = []
    if np.any(pu.initial(u_m.x)[inner] != 0):
        failed.append("ic = 0 on x <= W")
    if np.any(_boundary_rows(pu, t)[:, 0] != 0):
        failed.append("u = 0 at x = 0")
    for name, fn in (("f", pu.f), ("g", pu.g)):
        if np.any(_field_on_rows(fn, u_m)[:, inner] != 0):
            failed.append(f"{name} = 0 on x <= W")
    if np.any(pv.initial(v_m.x) != 0) or np.any(_boundary_rows(pv, t) != [0.0, 1.0]) \
            or pv.f is not None or pv.g is not None:
        failed.append("v_m data")
    if failed:
        raise ValueError("envelope hypotheses fail: " + ", ".join(failed))

    uu = u_m.stack()
    vv = v_m.stack()
    k = vv.shape[-1] - 1
    edge = np.abs(uu[..., k])
    running = np.maximum.accumulate(edge, axis=1)
    lhs = np.abs(uu[..., :k])
    rhs = vv[..., :k] * running[..., None]
    scale = float(np.max(np.abs(uu))) + TINY
    excess = lhs - rhs
    viol, at = _locate(u_m, excess, scale)
    frac = float(np.mean(excess <= tol * scale))
    return Report("envelope", viol, tol, at, f"m={m}, {len(u_m)} member(s)", scale,
                  {"pass_fraction": frac})


@dataclass(frozen=True)
class CoefficientFields:
    """Coefficients of the general equation on a space-time grid.

    Grid shape is (len(times),) + tuple(len(ax) for ax in axes).  Trailing axes:
    a (d, d), b (d,), a_vec (d,) the first-order coefficient a^i, c scalar,
    sigma (d, d1), nu (d1,), xi (d,), eta (d,).  eta defaults to its defining
    combination a^i - b^i - (sigma^i, nu) - xi^i.  K1, K2 broadcast to the grid.
    """

    times: np.ndarray
    axes: tuple
    a: np.ndarray
    sigma: np.ndarray
    b: np.ndarray | None = None
    a_vec: np.ndarray | None = None
    c: np.ndarray | float = 0.0
    nu: np.ndarray | None = None
    xi: np.ndarray | None = None
    eta: np.ndarray | None = None
    K1: np.ndarray | float = 1.0
    K2: np.ndarray | float = 0.0

    @property
    def grid_shape(self) -> tuple:
        return (len(self.times),) + tuple(len(ax) for ax in self.axes)

    @property
    def dim(self) -> int:
        return len(self.axes)

    def _vec(self, arr, width):
        if arr is None:
            return np.zeros(self.grid_shape + (width,))
        arr = np.asarray(arr, dtype=float)
        if arr.shape != self.grid_shape + (width,):
            raise ValueError(f"expected shape {self.grid_shape + (width,)}, got {arr.shape}")
        return arr

    def validated(self):
        d = self.dim
        g = self.grid_shape
        a = np.asarray(self.a, dtype=float)
        sig = np.asarray(self.sigma, dtype=float)
        if a.shape != g + (d, d):
            raise ValueError(f"a must have shape {g + (d, d)}, got {a.shape}")
        if sig.shape[:-1] != g + (d,):
            raise ValueError(f"sigma must have shape {g + (d, 'd1')}, got {sig.shape}")
        d1 = sig.shape[-1]
        b, av, xi = self._vec(self.b, d), self._vec(self.a_vec, d), self._vec(self.xi, d)
        nu = self._vec(self.nu, d1)
        eta_def = av - b - np.einsum("...ik,...k->...i", sig, nu) - xi
        if self.eta is None:
            eta = eta_def
        else:
            eta = self._vec(self.eta, d)
            if not np.allclose(eta, eta_def, rtol=1e-10, atol=1e-12):
                raise ValueError("eta differs from a^i - b^i - (sigma^i, nu) - xi^i")
        c = np.broadcast_to(np.asarray(self.c, dtype=float), g)
        k1 = np.broadcast_to(np.asarray(self.K1, dtype=float), g)
        k2 = np.broadcast_to(np.asarray(self.K2, dtype=float), g)
        if np.any(k1 <= 0) or np.any(k2 < 0):
            raise ValueError("need K1 > 0 and K2 >= 0")
        return a, sig, nu, xi, eta, c, k1, k2


def check_assumptions(cf: CoefficientFields, lambda_samples, tol: float = 1e-12) -> Report:
    """Pointwise |lambda . xi|^2 <= K1 (2a - alpha) lambda lambda and div eta - 2c + |nu|^2 <= K2.

    alpha = sigma sigma^T; div eta uses centred differences (one-sided at the
    ends).  The worst margin of each inequality is kept in ``extra``.
    """
    a, sig, nu, xi, eta, c, k1, k2 = cf.validated()
    lam = np.atleast_2d(np.asarray(lambda_samples, dtype=float))
    if lam.shape[-1] != cf.dim:
        raise ValueError(f"directions must have {cf.dim} components")
    if np.any(np.all(lam == 0, axis=-1)):
        raise ValueError("direction samples must be nonzero")

    alpha = np.einsum("...ik,...jk->...ij", sig, sig)
    form = 2 * a - alpha
    quad = np.einsum("li,...ij,lj->...l", lam, form, lam)
    lin = np.einsum("li,...i->...l", lam, xi) ** 2
    parab = lin - k1[..., None] * quad
    parab_worst = parab.max(axis=-1)

    div = np.zeros(cf.grid_shape)
    for i, ax in enumerate(cf.axes):
        div += np.gradient(eta[..., i], np.asarray(ax, dtype=float), axis=1 + i)
    zeroth = div - 2 * c + (nu**2).sum(axis=-1) - k2

    worst = np.maximum(parab_worst, zeroth)
    idx = np.unravel_index(int(np.argmax(worst)), worst.shape)
    loc = (float(cf.times[idx[0]]),) + tuple(float(ax[j]) for ax, j in zip(cf.axes, idx[1:]))
    viol = max(float(worst[idx]), 0.0)
    ctx = []
    if parab_worst.max() > tol:
        ctx.append("parabolicity fails")
    if zeroth.max() > tol:
        ctx.append("div eta - 2c + |nu|^2 <= K2 fails")
    return Report("assumptions", viol, tol, loc, "; ".join(ctx) or "ok", 1.0,
                  {"parabolicity_margin": float(-parab_worst.max()),
                   "zeroth_order_margin": float(-zeroth.max())})
