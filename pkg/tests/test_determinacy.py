"""Constant estimation, barrier function, and existence-time selection."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from charpicard.determinacy import (Trapezoid, blowup_time, choose_T,
                                    compute_constants, estimate_C0,
                                    estimate_C1, estimate_C2, estimate_C3,
                                    estimate_Lambda, in_domain,
                                    trapezoid_for, ybar, ybar_integral)
from charpicard.problem import ProblemSpec

from helpers import rk4_barrier

TWO_PI = 2.0 * np.pi


def _spec(n, a, b, lam, h, u0):
    return ProblemSpec.from_strings(n, a, b, lam, h, u0)


# ---------------------------------------------------------------------------
# C0

def test_c0_sine():
    spec = _spec(1, 0.0, TWO_PI, ["1"], ["0"], ["sin(x)"])
    assert estimate_C0(spec) == pytest.approx(1.0, abs=1e-6)


def test_c0_zero():
    spec = _spec(1, 0.0, 1.0, ["1"], ["0"], ["0"])
    assert estimate_C0(spec) == 0.0


def test_c0_linear_endpoint():
    spec = _spec(1, -2.0, 1.0, ["1"], ["0"], ["x"])
    assert estimate_C0(spec) == pytest.approx(2.0, abs=1e-12)


# ---------------------------------------------------------------------------
# Lambda

def test_lambda_constant():
    spec = _spec(1, 0.0, 1.0, ["1"], ["0"], ["0"])
    assert estimate_Lambda(spec, 0.0) == pytest.approx(1.0)


def test_lambda_attained_on_ball_surface():
    spec = _spec(1, 0.0, 1.0, ["u1"], ["0"], ["0"])
    assert estimate_Lambda(spec, 1.0) == pytest.approx(2.0, abs=1e-12)


def test_lambda_coupled_pair():
    spec = _spec(2, 0.0, 1.0, ["1 + 0.1*u2", "-1 + 0.1*u1"], ["0", "0"],
                 ["0", "0"])
    assert estimate_Lambda(spec, 1.0) == pytest.approx(1.2, abs=1e-12)


# ---------------------------------------------------------------------------
# C1, C2, C3

def test_c1_sine_transport():
    spec = _spec(1, 0.0, TWO_PI, ["1"], ["0"], ["sin(x)"])
    assert estimate_C1(spec) == pytest.approx(1.0, abs=1e-6)


def test_c1_constant_data():
    spec = _spec(1, 0.0, 1.0, ["1"], ["0"], ["3"])
    assert estimate_C1(spec) == 0.0


def test_c1_linear_data():
    spec = _spec(1, 0.0, 1.0, ["1"], ["0"], ["x"])
    assert estimate_C1(spec) == pytest.approx(1.0)


def test_c2_vanishing():
    spec = _spec(1, 0.0, 1.0, ["1"], ["0"], ["0"])
    assert estimate_C2(spec, 0.0) == 0.0


def test_c2_from_A_u():
    spec = _spec(1, 0.0, 1.0, ["u1"], ["0"], ["0"])
    assert estimate_C2(spec, 0.0) == pytest.approx(1.0)


def test_c2_from_h_x():
    spec = _spec(1, 0.0, TWO_PI, ["1"], ["sin(x)*u1"], ["0"])
    assert estimate_C2(spec, 1.0) == pytest.approx(2.0, abs=1e-6)


def test_c3_u_independent():
    spec = _spec(1, 0.0, 1.0, ["1"], ["0"], ["0"])
    assert estimate_C3(spec, 0.0) == 0.0


def test_c3_linear_eigenvalue():
    spec = _spec(1, 0.0, 1.0, ["u1"], ["0"], ["0"])
    assert estimate_C3(spec, 0.0) == pytest.approx(1.0)


def test_c3_product_source():
    spec = _spec(2, 0.0, 1.0, ["1", "2"], ["u1*u2", "0"], ["0", "0"])
    assert estimate_C3(spec, 1.0) == pytest.approx(2.0, abs=1e-12)


# ---------------------------------------------------------------------------
# Barrier

def test_ybar_initial_condition():
    for n, c1, c2 in [(1, 0.3, 0.7), (2, 1.5, 0.1), (3, 0.0, 2.0)]:
        assert ybar(0.0, n, c1, c2) == pytest.approx(c1)


def test_ybar_zero_case():
    assert ybar(0.7, 1, 0.0, 0.0) == 0.0


def test_ybar_closed_form_value():
    # (n=2, C1=0.5, C2=1, t=0.1) -> 7/6
    assert ybar(0.1, 2, 0.5, 1.0) == pytest.approx(7.0 / 6.0, rel=1e-14)


def test_ybar_against_rk4_oracle():
    got = ybar(0.1, 2, 0.5, 1.0)
    oracle = rk4_barrier(2, 0.5, 1.0, [0.1], step=1e-5)[0]
    assert got == pytest.approx(oracle, rel=1e-10)


def test_ybar_blowup_guard():
    bt = blowup_time(1, 0.0, 1.0)
    assert bt == 1.0
    with pytest.raises(ValueError, match="blow-up"):
        ybar(1.0, 1, 0.0, 1.0)


def test_ybar_satisfies_its_ode():
    rng = np.random.default_rng(5)
    n, c1, c2 = 2, 0.4, 0.8
    bt = blowup_time(n, c1, c2)
    h = 1e-6
    for t in rng.uniform(h, 0.9 * bt, size=100):
        fd = (ybar(t + h, n, c1, c2) - ybar(t - h, n, c1, c2)) / (2 * h)
        rhs = c2 * (1.0 + n * ybar(t, n, c1, c2)) ** 2
        assert abs(fd - rhs) <= 1e-4 * max(1.0, abs(rhs))


# ---------------------------------------------------------------------------
# Barrier integral

def test_integral_empty():
    assert ybar_integral(0.0, 2, 1.0, 1.0) == 0.0


def test_integral_constant_barrier():
    assert ybar_integral(0.5, 1, 2.0, 0.0) == pytest.approx(1.0)


def test_integral_closed_form_value():
    want = math.log(2.0) - 0.5
    assert ybar_integral(0.5, 1, 0.0, 1.0) == pytest.approx(want, rel=1e-14)


def test_integral_against_quadrature_oracle():
    for n, c1, c2, T in [(1, 0.0, 1.0, 0.5), (2, 0.5, 0.3, 0.8),
                         (3, 1.0, 0.05, 1.0)]:
        got = ybar_integral(T, n, c1, c2)
        oracle, err = quad(lambda s: n * ybar(s, n, c1, c2), 0.0, T,
                           epsabs=1e-12, epsrel=1e-12)
        assert got == pytest.approx(oracle, abs=max(1e-10, 10 * err))


def test_integral_derivative_is_n_ybar():
    n, c1, c2 = 2, 0.4, 0.8
    bt = blowup_time(n, c1, c2)
    h = 1e-6
    for t in np.linspace(0.05, 0.7 * bt, 25):
        fd = (ybar_integral(t + h, n, c1, c2)
              - ybar_integral(t - h, n, c1, c2)) / (2 * h)
        assert abs(fd - n * ybar(t, n, c1, c2)) <= 1e-6 * max(1.0, abs(fd))


# ---------------------------------------------------------------------------
# Existence time

def test_choose_T_integral_constraint_closed_form():
    assert choose_T(1, 2.0, 0.0) == 0.5


def test_choose_T_cap_binds():
    assert choose_T(1, 0.5, 0.0) == 1.0


def test_choose_T_bisection_case():
    T = choose_T(1, 0.0, 1.0)
    assert 0.8413 <= T <= 0.8415
    integral = ybar_integral(T, 1, 0.0, 1.0)
    assert 1.0 - 1e-8 <= integral <= 1.0


def test_choose_T_monotone_in_constants():
    c1s = [0.0, 0.5, 1.0, 2.0]
    c2s = [0.0, 0.3, 1.0, 3.0]
    for n in (1, 2):
        for c2 in c2s:
            ts = [choose_T(n, c1, c2) for c1 in c1s]
            assert all(a >= b for a, b in zip(ts, ts[1:]))
        for c1 in c1s:
            ts = [choose_T(n, c1, c2) for c2 in c2s]
            assert all(a >= b for a, b in zip(ts, ts[1:]))


def test_choose_T_stays_below_blowup():
    for n, c1, c2 in [(1, 0.0, 5.0), (2, 3.0, 2.0), (1, 10.0, 0.5)]:
        T = choose_T(n, c1, c2)
        assert 0.0 < T <= 1.0
        assert T <= 0.99 * blowup_time(n, c1, c2) + 1e-15
        assert ybar_integral(T, n, c1, c2) <= 1.0


# ---------------------------------------------------------------------------
# Trapezoid membership

def test_in_domain_corner_and_edges():
    trap = Trapezoid(0.0, 10.0, 1.0, 1.0)
    assert in_domain(0.0, 0.0, trap)
    assert not in_domain(0.0, 0.5, trap)          # left edge moved right
    assert in_domain(5.0, trap.T, trap)           # top-edge midpoint
    assert in_domain(1.0, 1.0, trap)              # top-left corner
    assert not in_domain(0.999, 1.0, trap)
    assert not in_domain(5.0, 1.1, trap)
    assert in_domain(10.0, 0.0, trap)


def test_trapezoid_requires_nonempty_top():
    with pytest.raises(ValueError, match="top edge"):
        Trapezoid(0.0, 1.0, 1.0, 0.5)


# ---------------------------------------------------------------------------
# Sampling-density monotonicity (nested refinement doubles every interval)

def test_estimates_monotone_under_density_doubling():
    spec = _spec(2, 0.0, 5.0, ["1 + 0.3*sin(7*x)*u2", "-1 + 0.1*u1"],
                 ["sin(3*x)*u1", "cos(5*x)"],
                 ["0.5*sin(2*x)", "0.3*cos(3*x)"])
    for fn in (estimate_C0, estimate_C1):
        coarse = fn(spec, samples=501)
        fine = fn(spec, samples=1001)      # 500 -> 1000 intervals, nested
        assert fine >= coarse
    for fn in (estimate_Lambda, estimate_C2, estimate_C3):
        coarse = fn(spec, 0.6, 11, 11)
        fine = fn(spec, 0.6, 21, 21)       # 10 -> 20 intervals, nested
        assert fine >= coarse


def test_compute_constants_assembly():
    spec = _spec(1, 0.0, TWO_PI, ["1"], ["0"], ["sin(x)"])
    consts = compute_constants(spec)
    assert consts.C0 == pytest.approx(1.05, abs=1e-6)
    assert consts.Lambda == pytest.approx(1.05, abs=1e-6)
    assert consts.C1 == pytest.approx(1.05, abs=1e-6)
    assert consts.C2 == 0.0
    assert consts.C3 == 0.0
    assert consts.blowup_time == math.inf
    assert consts.T == pytest.approx(1.0 / 1.05, rel=1e-9)
    # C4 = n * Ybar(T) * safety; constant barrier here
    assert consts.C4 == pytest.approx(1.05 * consts.C1, rel=1e-12)
    trap = trapezoid_for(spec, consts)
    assert trap.b - trap.a > 2 * trap.Lambda * trap.T


def test_compute_constants_unit_safety_reproduces_closed_forms():
    spec = _spec(1, 0.0, TWO_PI, ["1"], ["0"], ["sin(x)"])
    consts = compute_constants(spec, safety_factor=1.0)
    assert consts.C0 == pytest.approx(1.0, abs=1e-6)
    assert consts.Lambda == pytest.approx(1.0)
    assert consts.C1 == pytest.approx(1.0)
    assert consts.T == 1.0
    assert ybar_integral(consts.T, 1, consts.C1, consts.C2) \
        == pytest.approx(1.0)
