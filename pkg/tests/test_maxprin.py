import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spdemax.maxprin import (CoefficientFields, check_assumptions, envelope_problem, verify_barrier,
                             verify_comparison, verify_envelope, verify_sign)
from spdemax.paths import TimeGrid
from spdemax.report import Report, parse_line
from spdemax.spde_fd import SpaceGrid, SpdeProblem, cfl_grid, driver_increments, solve_spde


def neg_sine(x):
    return -np.sin(np.pi * x)


@pytest.fixture(scope="module")
def setting():
    sg = SpaceGrid(0, 1, 32)
    tg = cfl_grid(0.1, sg)
    return sg, tg, driver_increments(tg, 21, range(8))


def test_report_line_roundtrip():
    rep = Report("sign", 2.5e-4, 1e-3, (0.125, 0.5))
    assert rep.passed and rep.verdict == "pass"
    line = rep.line()
    assert line == "CHECK sign verdict=pass max_violation=2.500000e-04 at=(0.125,0.5) tol=1.000000e-03"
    back = parse_line(line)
    assert back["max_violation"] == 2.5e-4 and back["verdict"] == "pass"
    assert Report("x", 1.0, 0.5).line().endswith("at=none tol=5.000000e-01")
    assert not Report("x", 1.0, 0.5)


@settings(max_examples=50, deadline=None)
@given(v=st.floats(0, 10), tol=st.floats(0, 10))
def test_report_verdict_invariant(v, tol):
    assert Report("x", v, tol).passed == (v <= tol)


def test_sign_zero_data(setting):
    sg, tg, dw = setting
    rep = verify_sign(solve_spde(SpdeProblem(sigma=0.5), tg, sg, dw))
    assert rep.passed and rep.max_violation == 0.0


def test_sign_rejects_positive_data(setting):
    sg, tg, dw = setting
    with pytest.raises(ValueError, match="ic <= 0"):
        verify_sign(solve_spde(SpdeProblem(sigma=0.5, ic=lambda x: np.sin(np.pi * x)), tg, sg, dw))
    with pytest.raises(ValueError, match="g = 0"):
        verify_sign(solve_spde(SpdeProblem(sigma=0.5, ic=neg_sine, g=lambda t, x: 0.1 * x), tg, sg, dw))


def test_sign_exact_without_noise(setting):
    sg, tg, dw = setting
    prob = SpdeProblem(ic=neg_sine, f=lambda t, x: -np.abs(np.cos(7 * x + t)), bc_lo=lambda t: -t)
    rep = verify_sign(solve_spde(prob, tg, sg, np.zeros_like(dw)), tol=0.0)
    assert rep.passed and rep.max_violation == 0.0
    assert rep.scale == pytest.approx(1.0 + 0.1 * 1.0, rel=1e-3)


def test_comparison_identical_and_linear(setting):
    sg, tg, dw = setting
    u = solve_spde(SpdeProblem(sigma=0.5, ic=lambda x: np.sin(np.pi * x)), tg, sg, dw)
    assert verify_comparison(u, u, 1.0).max_violation == 0.0
    u2 = solve_spde(SpdeProblem(sigma=0.5, ic=lambda x: 2 * np.sin(np.pi * x)), tg, sg, dw)
    rep = verify_comparison(u2, u, 2.0, tol=0.0)
    assert rep.passed


def test_comparison_equals_sign_of_difference(setting):
    # with constant rho the check is the sign check on u - rho u_bar
    sg, tg, dw = setting
    ub = solve_spde(SpdeProblem(sigma=0.5, ic=lambda x: np.sin(np.pi * x)), tg, sg, dw)
    u = solve_spde(SpdeProblem(sigma=0.5, ic=lambda x: 1.5 * np.sin(np.pi * x) ** 2), tg, sg, dw)
    rho = 1.5
    rep = verify_comparison(u, ub, rho)
    diff = solve_spde(SpdeProblem(sigma=0.5, ic=lambda x: 1.5 * np.sin(np.pi * x) ** 2 - rho * np.sin(np.pi * x)),
                      tg, sg, dw)
    assert np.max(np.abs(diff.values - (u.values - rho * ub.values))) <= 1e-12
    raw = rep.max_violation * rep.scale
    assert raw == pytest.approx(max(diff.values.max(), 0.0), rel=1e-10, abs=1e-14)
    assert rep.location == verify_sign(diff).location


def test_comparison_guards(setting):
    sg, tg, dw = setting
    u = solve_spde(SpdeProblem(sigma=0.5, ic=lambda x: np.sin(np.pi * x)), tg, sg, dw)
    other = solve_spde(SpdeProblem(sigma=0.5, ic=lambda x: np.sin(np.pi * x)), tg, sg, dw[::-1])
    with pytest.raises(ValueError, match="noise"):
        verify_comparison(u, other)
    with pytest.raises(ValueError, match="nondecreasing"):
        verify_comparison(u, u, np.linspace(2, 1, tg.n_steps + 1))
    with pytest.raises(ValueError, match="coefficients"):
        verify_comparison(u, solve_spde(SpdeProblem(sigma=0.4, ic=lambda x: np.sin(np.pi * x)), tg, sg, dw))
    big = solve_spde(SpdeProblem(sigma=0.5, ic=lambda x: 3 * np.sin(np.pi * x)), tg, sg, dw)
    with pytest.raises(ValueError, match="ic ordered"):
        verify_comparison(big, u)


def test_comparison_with_growing_rho(setting):
    sg, tg, dw = setting
    u = solve_spde(SpdeProblem(sigma=0.5, ic=lambda x: 0.5 * np.sin(np.pi * x)), tg, sg, dw)
    half = solve_spde(SpdeProblem(sigma=0.5, ic=0.5, bc_lo=0.5, bc_hi=0.5), tg, sg, dw)
    rep = verify_comparison(u, half, 1.0 + tg.times)
    assert rep.passed


def test_barrier(setting):
    sg, tg, dw = setting
    u = solve_spde(SpdeProblem(sigma=0.5, ic=lambda x: np.sin(np.pi * x)), tg, sg, dw)
    one = solve_spde(SpdeProblem(sigma=0.5, ic=1.0, bc_lo=1.0, bc_hi=1.0), tg, sg, dw)
    assert np.max(np.abs(one.values - 1.0)) < 1e-13
    rep = verify_barrier(u, one)
    assert rep.passed and rep.name == "barrier"
    quiet = np.zeros_like(dw)
    u0 = solve_spde(SpdeProblem(ic=lambda x: np.sin(np.pi * x)), tg, sg, quiet)
    one0 = solve_spde(SpdeProblem(ic=1.0, bc_lo=1.0, bc_hi=1.0), tg, sg, quiet)
    assert verify_barrier(u0, one0, tol=0.0).max_violation == 0.0


def _envelope_pair(sigma, dw, tg, m=2, dx=2.0**-5, f=None):
    sg = SpaceGrid(0, 1, round(1 / dx))
    pu = SpdeProblem(sigma=sigma, f=f)
    u = solve_spde(pu, tg, sg, dw)
    w = 2.0 ** (-m / 2)
    v = solve_spde(envelope_problem(pu, m), tg, SpaceGrid(0, w, round(w / dx)), dw)
    return u, v


def bump(t, x):
    return np.where((x > 0.5) & (x < 1.0), np.sin(2 * np.pi * (x - 0.5)) ** 2, 0.0) * np.ones_like(t)


def test_envelope_zero_data(setting):
    _, tg, dw = setting
    u, v = _envelope_pair(0.5, dw, tg)
    rep = verify_envelope(u, v, 2)
    assert rep.passed and rep.extra["pass_fraction"] == 1.0


def test_envelope_deterministic(setting):
    _, tg, dw = setting
    u, v = _envelope_pair(0.0, np.zeros_like(dw), tg, f=bump)
    rep = verify_envelope(u, v, 2, tol=1e-3)
    assert rep.passed and rep.extra["pass_fraction"] == 1.0
    assert np.max(np.abs(u.values)) > 0


def test_envelope_guards(setting):
    _, tg, dw = setting
    u, v = _envelope_pair(0.5, dw, tg, f=bump)
    with pytest.raises(ValueError):
        verify_envelope(u, v, 4)
    with pytest.raises(ValueError, match="noise"):
        verify_envelope(u, _envelope_pair(0.5, dw[::-1], tg)[1], 2)
    wide = lambda t, x: np.ones_like(x) * np.ones_like(t)
    u_bad, v_bad = _envelope_pair(0.5, dw, tg, f=wide)
    with pytest.raises(ValueError, match="f = 0"):
        verify_envelope(u_bad, v_bad, 2)


def _fields_1d(a=1.0, sigma=1.0, xi=0.0, eta_slope=None, k1=1.0, k2=0.0):
    t = np.linspace(0, 1, 5)
    x = np.linspace(0, 1, 11)
    g = (t.size, x.size)
    eta = None if eta_slope is None else (eta_slope * x * np.ones(g))[..., None]
    a_vec = None if eta is None else eta
    return CoefficientFields(t, (x,), np.full(g + (1, 1), a), np.full(g + (1, 1), sigma),
                             a_vec=a_vec, xi=np.full(g + (1,), xi), eta=eta, K1=k1, K2=k2)


def test_assumptions_examples():
    # xi = 0, sigma = 0, a = identity in 2-D
    t = np.linspace(0, 1, 3)
    axes = (np.linspace(0, 1, 4), np.linspace(0, 2, 5))
    g = (3, 4, 5)
    cf = CoefficientFields(t, axes, np.broadcast_to(np.eye(2), g + (2, 2)), np.zeros(g + (2, 2)), K1=1e-6)
    assert check_assumptions(cf, [[1, 0], [0.3, -2.0]]).passed
    rep = check_assumptions(_fields_1d(sigma=1.2), [[1.0]])
    assert rep.passed and rep.extra["parabolicity_margin"] == pytest.approx(0.56)
    assert check_assumptions(_fields_1d(eta_slope=0.3, k2=0.4), [[1.0]]).passed
    rep = check_assumptions(_fields_1d(eta_slope=0.5, k2=0.4), [[1.0]])
    assert not rep.passed and "K2" in rep.context
    assert rep.max_violation == pytest.approx(0.1)
    rep = check_assumptions(_fields_1d(sigma=1.2, xi=1.0, k1=1.0), [[1.0]])
    assert not rep.passed and "parabolicity" in rep.context


def test_assumptions_guards():
    cf = _fields_1d()
    with pytest.raises(ValueError):
        check_assumptions(cf, [[0.0]])
    with pytest.raises(ValueError):
        check_assumptions(cf, [[1.0, 0.0]])
    bad = CoefficientFields(cf.times, cf.axes, cf.a, cf.sigma, eta=np.ones(cf.grid_shape + (1,)))
    with pytest.raises(ValueError, match="eta"):
        check_assumptions(bad, [[1.0]])


def test_assumptions_column_relabeling():
    rng = np.random.default_rng(0)
    t = np.linspace(0, 1, 3)
    axes = (np.linspace(0, 1, 6), np.linspace(0, 1, 7))
    g = (3, 6, 7)
    sig = 0.4 * rng.standard_normal(g + (2, 3))
    nu = rng.standard_normal(g + (3,))
    a = np.broadcast_to(2 * np.eye(2), g + (2, 2))
    xi = 0.2 * rng.standard_normal(g + (2,))
    lam = rng.standard_normal((10, 2))
    base = check_assumptions(CoefficientFields(t, axes, a, sig, nu=nu, xi=xi, K1=1.0, K2=5.0), lam)
    for perm in itertools.permutations(range(3)):
        p = list(perm)
        rep = check_assumptions(CoefficientFields(t, axes, a, sig[..., p], nu=nu[..., p], xi=xi, K1=1.0, K2=5.0), lam)
        assert rep.extra["parabolicity_margin"] == pytest.approx(base.extra["parabolicity_margin"], rel=1e-12)
        assert rep.extra["zeroth_order_margin"] == pytest.approx(base.extra["zeroth_order_margin"], rel=1e-12)
