import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frontlab.model import Nonlinearity
from frontlab.transients import (
    M0,
    Z0,
    TransientGrid,
    eigen_subsolution,
    eigenvalue,
    envelope,
    envelope_bound_check,
    envelope_constant,
    initial_column,
    linear_dirichlet_exact,
    linear_dirichlet_quad,
    measure_T_eps,
    profile_maximiser,
    solve_exp_over_t,
    solve_T1,
    steady_state,
    subsolution_constant,
    subsolution_window,
    transient_law_fit,
)
from frontlab.field import ColumnScheme, dirichlet_1d_column_solve

TH = Nonlinearity("threshold", 1.0, 0.3)


def test_exact_vanishes_at_boundary():
    assert np.all(linear_dirichlet_exact(np.array([0.5, 2.0, 9.0]), 0.0, 1e-3) == 0.0)


def test_exact_initial_limit():
    assert linear_dirichlet_exact(1e-6, 0.75, 0.01) == pytest.approx(0.01, rel=1e-4)
    assert linear_dirichlet_exact(1e-6, 2.0, 0.01) == pytest.approx(0.0, abs=1e-12)


def test_exact_against_quadrature():
    # mpmath 30-digit quadrature: 2.2709692921526281203e-05
    assert float(linear_dirichlet_exact(2.0, 1.0, 1e-4)) == pytest.approx(2.2709692921526281e-05, abs=1e-18)
    for t, y in ((0.3, 0.2), (2.0, 1.0), (5.0, 3.5), (12.0, 8.0)):
        assert float(linear_dirichlet_exact(t, y, 1e-4)) == pytest.approx(linear_dirichlet_quad(t, y, 1e-4),
                                                                          rel=1e-10, abs=1e-20)
    with pytest.raises(ValueError):
        linear_dirichlet_exact(0.0, 1.0, 1e-4)


def test_profile_maximiser():
    z, m = profile_maximiser()
    assert z == pytest.approx(1.5811388300841898, abs=1e-7)
    assert m == pytest.approx(0.959009177708225, abs=1e-12)
    assert Z0 == pytest.approx(1.58114, abs=1e-5) and M0 == pytest.approx(0.95885, abs=2e-4)


def test_envelope_argmax_t9():
    rep = envelope_bound_check(9.0, 1e-6)
    assert rep.predicted_argmax == pytest.approx(4.743, abs=1e-3)
    assert rep.argmax_ok and rep.argmax_rel_error <= 0.15


def test_envelope_holds_t2():
    rep = envelope_bound_check(2.0, 1e-4)
    y = np.linspace(1.0, 20 * math.sqrt(2.0), 5000)
    assert np.all(linear_dirichlet_exact(2.0, y, 1e-4) <= envelope(2.0, y, 1e-4, rep.C) * (1 + 1e-12))
    assert rep.holds and rep.C > 0


def test_solve_T1_values():
    assert solve_exp_over_t(math.e**2 / 2) == 2.0
    assert solve_exp_over_t(100.0) == pytest.approx(6.472775124394005, abs=1e-9)
    # theta / (m0 C eps) = 100
    assert solve_T1(0.3 / (M0 * 0.1 * 100), 0.3, 0.1) == pytest.approx(6.472775124394005, abs=1e-9)
    with pytest.raises(ValueError):
        solve_exp_over_t(1.0)


def test_T1_monotone_in_eps():
    C = envelope_constant()
    eps = np.geomspace(1e-3, 1e-4, 12)
    T = [solve_T1(e, 0.3, C) for e in eps]
    assert np.all(np.diff(T) > 0)


def test_eigen_subsolution_basics():
    assert eigenvalue(5.0) == pytest.approx(0.61685, abs=1e-5)
    assert abs(eigen_subsolution(5.0, 8.0, 1.0, 1e-5, 7.0)) <= 1e-12 * eigen_subsolution(5.0, 8.0, 3.0, 1e-5, 7.0)
    assert eigen_subsolution(5.0, 8.0, 5.0, 1e-5, 7.0) <= 1e-12 * eigen_subsolution(5.0, 8.0, 3.0, 1e-5, 7.0)
    with pytest.raises(ValueError):
        eigen_subsolution(5.0, 8.0, 0.5, 1e-5, 7.0)


def test_subsolution_property():
    eps, L, theta = 1e-5, 10.0, 0.3
    C = envelope_constant()
    T1 = solve_T1(eps, theta, C)
    cL = subsolution_constant(L, T1)
    t_lo, t_hi = subsolution_window(L, T1, theta)
    dy, dt = 0.05, 0.005
    grid = TransientGrid(60.0, dy, dt)
    sc = ColumnScheme(grid.ny, dy, dt)
    v = initial_column(grid, eps)
    y = np.arange(grid.ny) * dy
    inside = (y >= 1.0) & (y <= L)
    t, n = 0.0, 0
    checked = 0
    while t <= t_hi:
        if t >= t_lo:
            sub = eigen_subsolution(L, t, y[inside], eps, T1, c_L=cL)
            assert np.all(v[inside] >= sub - 1e-12)
            checked += 1
        v = dirichlet_1d_column_solve(v, TH, dt, scheme=sc)
        n += 1
        t = n * dt
    assert checked > 10


def test_sandwich_linear_dominates():
    dy, dt, eps = 0.05, 0.01, 1e-2
    grid = TransientGrid(40.0, dy, dt)
    sc = ColumnScheme(grid.ny, dy, dt)
    lin = initial_column(grid, eps)
    non = lin.copy()
    for _ in range(800):
        lin = dirichlet_1d_column_solve(lin, Nonlinearity("linear", 1.0), dt, scheme=sc)
        non = dirichlet_1d_column_solve(non, TH, dt, scheme=sc)
        assert np.all(non <= lin + 1e-12)
    assert non.max() > TH.theta  # the nonlinear regime was reached


def test_steady_state_logistic():
    prof = steady_state(Nonlinearity("logistic", 1.0), 30.0)
    assert abs(prof.w[-1] - 1.0) <= 1e-4
    assert prof.slope0 > 0
    assert prof.slope0 == pytest.approx(math.sqrt(1.0 / 3.0), rel=1e-6)  # sqrt(2 F(v0)), F(1) = 1/6
    assert prof.residual <= 1e-9
    assert prof.energy_drift <= 1e-8


def test_steady_state_threshold():
    prof = steady_state(TH, 30.0)
    F = 0.5 - 0.7**4 / (4 * 0.7**3)
    assert prof.slope0 == pytest.approx(math.sqrt(2 * F), rel=1e-6)
    assert prof.energy_drift <= 1e-8
    with pytest.raises(ValueError):
        steady_state(TH, 10.0)


def test_measure_T_eps_guards():
    with pytest.raises(ValueError):
        measure_T_eps(0.6, 0.5)
    with pytest.raises(ValueError, match="strip too short"):
        measure_T_eps(1e-8, 0.5, grid=TransientGrid(Y=20.0))


def test_measure_T_eps_single():
    r = measure_T_eps(1e-4, 0.5)
    assert r.T_eps > r.T_linear  # f(v) <= v: the linear solution crosses first
    assert r.trace_v[-2] < 0.5 <= r.trace_v[-1]
    assert r.ratio == pytest.approx(1e-4 * math.exp(r.T_eps) / r.T_eps**1.5)
    # frozen from the dy=0.05, dt=0.01 run; refinement check: dy=0.025, dt=0.005 within 0.02
    assert r.T_eps == pytest.approx(14.9953, abs=2e-3)
    fine = measure_T_eps(1e-4, 0.5, grid=TransientGrid(dy=0.025, dt=0.005))
    assert abs(fine.T_eps - r.T_eps) <= 0.02


def test_law_fit_exact_and_null():
    eps = np.geomspace(1e-3, 1e-8, 6)
    L = np.log(1 / eps)
    fit = transient_law_fit(eps, L + 1.5 * np.log(L))
    assert fit.slope == pytest.approx(1.5, abs=1e-12) and fit.consistent
    null = transient_law_fit(eps, L + 4.0)
    assert null.slope == pytest.approx(0.0, abs=1e-12) and not null.consistent
    with pytest.raises(ValueError, match="insufficient"):
        transient_law_fit(eps[:3], L[:3])


@settings(max_examples=15, deadline=None)
@given(st.floats(0.5, 20.0), st.floats(0.0, 15.0))
def test_exact_nonnegative(t, y):
    assert linear_dirichlet_exact(t, y, 1e-3) >= 0
