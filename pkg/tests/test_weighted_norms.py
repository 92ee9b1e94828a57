import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spdemax.paths import TimeGrid
from spdemax.spde_fd import FieldSolution, SpaceGrid, SpdeProblem, cfl_grid, driver_increments, solve_spde
from spdemax.weighted_norms import (NormParams, check_norm_estimate, exponent_constants, fit_decay_exponent,
                                    norm_terms, tau_n, weighted_norm, weighted_norm_values, write_fit_rows,
                                    write_norm_rows, write_tau_rows)


def linear_field(T=2.0, n_rows=9, cells=256, x_hi=1.0):
    sg = SpaceGrid(0.0, x_hi, cells)
    tg = TimeGrid(T, n_rows - 1)
    vals = np.broadcast_to(np.where(sg.nodes <= 1.0, sg.nodes, 0.0), (n_rows, cells + 1)).copy()
    return FieldSolution(SpdeProblem(x_hi=x_hi), tg, sg, vals, np.zeros(n_rows - 1))


def test_norm_params_validation():
    with pytest.raises(ValueError):
        NormParams(1.5, 0.5)
    with pytest.raises(ValueError):
        NormParams(3, 3.0)
    with pytest.raises(ValueError):
        NormParams(3, 0.0)
    with pytest.raises(ValueError):
        NormParams(3, 1.0, order=3)


def test_zero_field():
    sol = linear_field()
    zero = FieldSolution(sol.problem, sol.tgrid, sol.sgrid, np.zeros_like(sol.values), sol.noise)
    assert weighted_norm(zero, NormParams(3, 1.0, 2, 1.0)) == 0.0


@pytest.mark.parametrize("p,theta", [(2, 0.5), (3, 1.0), (4, 2.5), (2.5, 0.2)])
def test_linear_closed_form(p, theta):
    T = 2.0
    sol = linear_field(T)
    exact = T / (theta + p)
    got = weighted_norm(sol, NormParams(p, theta, 0, T)) ** p
    assert abs(got - exact) < 1e-3 * exact
    # M D_x v = x as well, so the first order norm doubles
    h1 = weighted_norm(sol, NormParams(p, theta, 1, T))
    assert h1 == pytest.approx(2 * exact ** (1 / p), rel=1e-3)
    # D^2 of a linear field vanishes
    terms = norm_terms(sol.values, sol.times, sol.x, NormParams(p, theta, 2, T))
    assert terms[2] == pytest.approx(0.0, abs=1e-18)


def test_partial_horizon_and_quadratic():
    sol = linear_field(T=2.0)
    assert weighted_norm(sol, NormParams(2, 1.0, 0, 0.75)) ** 2 == pytest.approx(0.75 / 3, rel=1e-3)
    x = np.linspace(0, 1, 513)
    vals = np.broadcast_to(x**2, (3, x.size))
    # M^2 D^2 (x^2) = 2 x^2, p = 2, theta = 1: int 4 x^4 = 4/5
    terms = norm_terms(vals, np.array([0.0, 0.5, 1.0]), x, NormParams(2, 1.0, 2, 1.0))
    assert terms[2] == pytest.approx(0.8, rel=1e-3)
    assert terms[1] == pytest.approx(0.8, rel=1e-3)


@settings(max_examples=30, deadline=None)
@given(lam=st.floats(-5, 5), p=st.floats(2, 5), theta_frac=st.floats(0.05, 0.95), order=st.integers(0, 2))
def test_homogeneity_and_order_monotone(lam, p, theta_frac, order):
    rng = np.random.default_rng(0)
    x = np.linspace(0, 1, 33)
    vals = rng.standard_normal((4, 5, 33))
    times = np.linspace(0, 1, 5)
    prm = NormParams(p, theta_frac * p, order, 1.0)
    base = weighted_norm_values(vals, times, x, prm)
    assert weighted_norm_values(lam * vals, times, x, prm) == pytest.approx(abs(lam) * base, rel=1e-9, abs=1e-12)
    lower = [weighted_norm_values(vals, times, x, NormParams(p, theta_frac * p, k, 1.0)) for k in range(order + 1)]
    assert all(a <= b for a, b in zip(lower, lower[1:]))


def test_exponent_constants():
    ec = exponent_constants(4, 0.5, 1.0, 0.8, 0.9)
    assert ec.theta0 == pytest.approx(4 * (1 + math.log2(0.9)))
    assert ec.theta0 == pytest.approx(3.392, abs=1e-3)
    assert ec.mu_sup == pytest.approx(ec.theta0 - 2 + 2 * 4 * 0.5 * math.log2(0.9), abs=1e-12)
    assert ec.chi > 0 and ec.epsilon0 == ec.chi and not ec.degenerate
    flat = exponent_constants(3, 0.3, 1.0, 1.0, 1.0)
    assert flat.degenerate and flat.theta0 == 3 and flat.epsilon0 == 0
    with pytest.raises(ValueError):
        exponent_constants(3, 0.3, 1.0, 1.0, 0.7)
    with pytest.raises(ValueError):
        exponent_constants(2, 0.3, 1.0, 1.0, 0.9)


@settings(max_examples=100, deadline=None)
@given(p=st.floats(2.01, 20), alpha=st.floats(0.01, 0.99), gamma=st.floats(0.7072, 1.0))
def test_mu_bound_identity(p, alpha, gamma):
    ec = exponent_constants(p, alpha, 1.0, 1.0, gamma)
    lg = math.log2(gamma)
    assert abs(p * (1 + 2 * lg) - 2 - (ec.theta0 - 2 + 2 * p * (1 - alpha) * lg)) <= 1e-12 * max(1, abs(ec.mu_sup))
    assert ec.theta0 > 0


@pytest.mark.parametrize("power", [1.0, 0.35, 2.2])
def test_fit_power_law(power):
    x = np.linspace(0, 1, 257)
    assert fit_decay_exponent((x, x**power), None, (0.01, 0.5)) == pytest.approx(power, abs=1e-6)


def test_fit_guards():
    x = np.linspace(0, 1, 33)
    with pytest.raises(ValueError, match="points"):
        fit_decay_exponent((x, x), None, (0.1, 0.3))
    with pytest.raises(ValueError):
        fit_decay_exponent((x, x), None, (0.1, 0.8))
    with pytest.raises(ValueError, match="positive"):
        fit_decay_exponent((x, x - 0.2), None, (0.01, 0.5))
    sol = linear_field(cells=128)
    assert fit_decay_exponent(sol, 1.0, (0.02, 0.5)) == pytest.approx(1.0, abs=1e-6)


def test_tau_n_cases():
    assert tau_n(np.zeros(11), 1, 5.0) == 5.0
    assert abs(tau_n(np.ones(101), 3, 10.0) - 3.0) < 1e-12
    assert tau_n(np.ones(101), 5, 2.0) == 2.0
    # pi(t) = 2t: int = t^2, crossing at sqrt(n)
    t = np.linspace(0, 4, 41)
    assert tau_n(2 * t, 3, 4.0, times=t) == pytest.approx(math.sqrt(3), abs=1e-12)
    with pytest.raises(ValueError):
        tau_n(np.array([1.0, -1.0]), 1, 1.0)


@settings(max_examples=50, deadline=None)
@given(vals=st.lists(st.floats(0, 50), min_size=2, max_size=40))
def test_tau_n_monotone(vals):
    taus = [tau_n(np.array(vals), n, 3.0) for n in range(1, 8)]
    assert all(a <= b for a, b in zip(taus, taus[1:]))
    assert all(0 <= t <= 3.0 for t in taus)


def test_norm_estimate_cases():
    ec = exponent_constants(3, 0.5, 1.0, 1.0, 0.95)
    sg = SpaceGrid(0, 2, 64)
    tg = cfl_grid(0.1, sg)
    zero = solve_spde(SpdeProblem(x_hi=2.0), tg, sg, np.zeros(tg.n_steps))
    est = check_norm_estimate(zero, 3, 2.9, 0.5, 0.1, ec)
    assert est.vacuous and est.report().passed
    bump = lambda t, x: np.where((x > 0.25) & (x < 0.75), np.sin(2 * np.pi * (x - 0.25)) ** 2, 0.0) * np.ones_like(t)
    heat = solve_spde(SpdeProblem(x_hi=2.0, f=bump, vanish_beyond_one=True), tg, sg, np.zeros(tg.n_steps))
    est = check_norm_estimate(heat, 3, 2.9, 0.5, 0.1, ec)
    assert est.finite and 0 < est.ratio < math.inf
    with pytest.raises(ValueError):
        check_norm_estimate(heat, 3, 2.0, 0.5, 0.1, ec)
    with pytest.raises(ValueError):
        check_norm_estimate(heat, 3, 2.9, ec.mu_sup + 0.1, 0.1, ec)


def test_csv_writers():
    buf = io.StringIO()
    write_norm_rows(buf, [("L", 2, 0.5, 0, 1.0, 0.1)])
    write_tau_rows(buf, [(1, 0.25)])
    write_fit_rows(buf, [(0.5, (0.01, 0.1), 0.9)])
    assert buf.getvalue().splitlines() == [
        "quantity,p,theta,order,tau,value", "L,2,0.5,0,1.0,0.1",
        "n,tau_n", "1,0.25",
        "t,x_window,fitted_exponent", "0.5,0.01:0.1,0.9"]
