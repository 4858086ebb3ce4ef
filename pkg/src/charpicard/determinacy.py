"""Determinacy constants, the barrier function, and the existence time.

Implements the constant estimation pipeline: amplitude bound C0, speed
bound Lambda, initial-slope bound C1, coefficient-derivative bound C2,
u-Lipschitz bound C3, the explicit barrier Y(t) solving
Y' = C2 (1 + nY)^2 with Y(0) = C1, and the existence time T chosen so
that T <= 1 and the integral of n*Y over [0, T] stays below one.

Suprema are estimated by deterministic sampling (dense x grids; tensor
x-t grids crossed with fixed u-ball probes); a safety factor inflates
the assembled constants to cover sampling slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import fallback
from .problem import AdmissibleBox, u_ball_samples

DEFAULT_SAFETY = 1.05
DEFAULT_X_SAMPLES = 10001
DEFAULT_BOX_SAMPLES = 51
BLOWUP_MARGIN = 0.01
INTEGRAL_TOL = 1e-8


@dataclass(frozen=True)
class DeterminacyConstants:
    C0: float
    Lambda: float
    C1: float
    C2: float
    C3: float
    C4: float
    T: float
    blowup_time: float

    def as_dict(self):
        return {"C0": self.C0, "Lambda": self.Lambda, "C1": self.C1,
                "C2": self.C2, "C3": self.C3, "C4": self.C4, "T": self.T,
                "blowup_time": self.blowup_time}


@dataclass(frozen=True)
class Trapezoid:
    """The domain of determinacy {0 <= t <= T, a + Lambda t <= x <= b - Lambda t}."""

    a: float
    b: float
    Lambda: float
    T: float

    def __post_init__(self):
        if not self.b - self.a > 2.0 * self.Lambda * self.T:
            raise ValueError(
                "empty top edge: need b - a > 2 Lambda T, got "
                f"b-a={self.b - self.a}, 2*Lambda*T="
                f"{2.0 * self.Lambda * self.T}")

    def xlo(self, t):
        return self.a + self.Lambda * t

    def xhi(self, t):
        return self.b - self.Lambda * t


def in_domain(x, t, trap, tol=1e-12):
    """Inclusive trapezoid membership with boundary tolerance."""
    if t < -tol or t > trap.T + tol:
        return False
    return trap.xlo(t) - tol <= x <= trap.xhi(t) + tol


# ---------------------------------------------------------------------------
# Sampled suprema

def _x_grid(spec, samples):
    return np.linspace(spec.a, spec.b, max(int(samples), 2))


def _norm_rows(rows):
    """Euclidean norm across component rows; rows shape (n, m)."""
    return np.sqrt(np.einsum("ij,ij->j", rows, rows))


def estimate_C0(spec, samples=DEFAULT_X_SAMPLES):
    """Sampled max over [a, b] of the Euclidean norm of the initial data."""
    xg = _x_grid(spec, samples)
    rows = np.array([fallback.eval_program(p, xg, 0.0, None)
                     for p in spec.programs.u0])
    return float(_norm_rows(rows).max())


def estimate_C1(spec, samples=DEFAULT_X_SAMPLES):
    """Sampled max of |u0'(x)| and |h(x,0,u0) - A(x,0,u0) u0'(x)|."""
    xg = _x_grid(spec, samples)
    progs = spec.programs
    u0 = np.array([fallback.eval_program(p, xg, 0.0, None)
                   for p in progs.u0])
    u0p = np.array([fallback.eval_program(p, xg, 0.0, None)
                    for p in progs.u0_prime])
    lam = np.array([fallback.eval_program(p, xg, 0.0, u0)
                    for p in progs.lam])
    h = np.array([fallback.eval_program(p, xg, 0.0, u0)
                  for p in progs.h])
    slope = _norm_rows(u0p)
    time_deriv = _norm_rows(h - lam * u0p)
    return float(max(slope.max(), time_deriv.max()))


def _box_iter(spec, c0, nx, nt):
    box = AdmissibleBox(spec.a, spec.b, c0 + 1.0)
    xg = np.linspace(box.a, box.b, max(int(nx), 2))
    tg = np.linspace(box.t_lo, box.t_hi, max(int(nt), 2))
    upts = u_ball_samples(spec.n, box.radius)
    for tv in tg:
        for up in upts:
            u = np.broadcast_to(up[:, None], (spec.n, xg.shape[0]))
            yield xg, float(tv), u


def estimate_Lambda(spec, c0, nx=DEFAULT_BOX_SAMPLES, nt=DEFAULT_BOX_SAMPLES):
    """Sampled max of |lam_i| over the box with u-radius c0 + 1."""
    best = 0.0
    progs = spec.programs
    for xg, tv, u in _box_iter(spec, c0, nx, nt):
        for p in progs.lam:
            best = max(best, float(np.abs(
                fallback.eval_program(p, xg, tv, u)).max()))
    return best


def estimate_C2(spec, c0, nx=DEFAULT_BOX_SAMPLES, nt=DEFAULT_BOX_SAMPLES):
    """Sampled max of the five coefficient-derivative bounds.

    The bracketed quantities are |h_x|, |h_t|, |h_u| + |A_x|,
    |h_u| + |A_t| and |A_u|; vector norms are Euclidean across
    components, the h_u Jacobian uses the Frobenius norm, and the
    diagonal A uses the max over entries.
    """
    progs = spec.programs
    n = spec.n
    best = 0.0
    for xg, tv, u in _box_iter(spec, c0, nx, nt):
        hx = np.array([fallback.eval_program(p, xg, tv, u)
                       for p in progs.h_x])
        ht = np.array([fallback.eval_program(p, xg, tv, u)
                       for p in progs.h_t])
        hu_sq = np.zeros(xg.shape[0])
        for i in range(n):
            for k in range(n):
                v = fallback.eval_program(progs.h_u[i][k], xg, tv, u)
                hu_sq += v * v
        hu = np.sqrt(hu_sq)
        ax = np.max(np.abs([fallback.eval_program(p, xg, tv, u)
                            for p in progs.lam_x]), axis=0)
        at = np.max(np.abs([fallback.eval_program(p, xg, tv, u)
                            for p in progs.lam_t]), axis=0)
        au = np.zeros(xg.shape[0])
        for i in range(n):
            g = np.zeros(xg.shape[0])
            for k in range(n):
                v = fallback.eval_program(progs.lam_u[i][k], xg, tv, u)
                g += v * v
            au = np.maximum(au, np.sqrt(g))
        cand = max(_norm_rows(hx).max(), _norm_rows(ht).max(),
                   (hu + ax).max(), (hu + at).max(), au.max())
        best = max(best, float(cand))
    return best


def estimate_C3(spec, c0, nx=DEFAULT_BOX_SAMPLES, nt=DEFAULT_BOX_SAMPLES):
    """Sampled max of the u-gradient norms of each lam_i and h_i."""
    progs = spec.programs
    n = spec.n
    best = 0.0
    for xg, tv, u in _box_iter(spec, c0, nx, nt):
        for grads in (progs.lam_u, progs.h_u):
            for i in range(n):
                g = np.zeros(xg.shape[0])
                for k in range(n):
                    v = fallback.eval_program(grads[i][k], xg, tv, u)
                    g += v * v
                best = max(best, float(np.sqrt(g).max()))
    return best


# ---------------------------------------------------------------------------
# Barrier function and existence time

def blowup_time(n, c1, c2):
    """Pole of the barrier; +inf when c2 = 0."""
    if c2 <= 0.0:
        return math.inf
    return 1.0 / (n * c2 * (1.0 + n * c1))


def ybar(t, n, c1, c2):
    """Explicit barrier Y(t) = (1/n)(1/((1+nC1)^-1 - nC2 t) - 1)."""
    if t < 0.0:
        raise ValueError(f"barrier time must be nonnegative, got {t}")
    if c2 <= 0.0:
        return c1
    if t >= blowup_time(n, c1, c2):
        raise ValueError(f"barrier blow-up: t={t} >= "
                         f"{blowup_time(n, c1, c2)}")
    alpha = 1.0 / (1.0 + n * c1)
    return (1.0 / (alpha - n * c2 * t) - 1.0) / n


def ybar_integral(T, n, c1, c2):
    """Closed form of the integral of n*Y over [0, T]."""
    if T < 0.0:
        raise ValueError(f"integration time must be nonnegative, got {T}")
    if c2 <= 0.0:
        return n * c1 * T
    if T >= blowup_time(n, c1, c2):
        raise ValueError(f"barrier blow-up: T={T} >= "
                         f"{blowup_time(n, c1, c2)}")
    alpha = 1.0 / (1.0 + n * c1)
    return math.log(alpha / (alpha - n * c2 * T)) / (n * c2) - T


def choose_T(n, c1, c2, blowup_margin=BLOWUP_MARGIN, tol=1e-10):
    """Largest T with T <= 1, T below the barrier pole, and integral <= 1.

    Bisection keeps the invariant integral(lo) <= 1 < integral(hi), so
    the returned T never overshoots the constraint.
    """
    cap = 1.0
    bt = blowup_time(n, c1, c2)
    if math.isfinite(bt):
        cap = min(cap, (1.0 - blowup_margin) * bt)
    if ybar_integral(cap, n, c1, c2) <= 1.0:
        return cap
    if c2 <= 0.0:
        # integral is n*c1*T; constraint active means n*c1*cap > 1
        return 1.0 / (n * c1)
    lo, hi = 0.0, cap
    int_lo = 0.0
    for _ in range(200):
        # stop once the interval is small AND the active constraint is
        # met to within a tenth of the allowed 1e-8 undershoot
        if hi - lo <= tol and 1.0 - int_lo <= 1e-9:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        val = ybar_integral(mid, n, c1, c2)
        if val <= 1.0:
            lo, int_lo = mid, val
        else:
            hi = mid
    return lo


def compute_constants(spec, safety_factor=DEFAULT_SAFETY,
                      x_samples=DEFAULT_X_SAMPLES,
                      box_samples=DEFAULT_BOX_SAMPLES,
                      blowup_margin=BLOWUP_MARGIN):
    """Assemble the constants; raw sampled sups times the safety factor."""
    sf = float(safety_factor)
    n = spec.n
    c0 = sf * estimate_C0(spec, x_samples)
    lam = sf * estimate_Lambda(spec, c0, box_samples, box_samples)
    c1 = sf * estimate_C1(spec, x_samples)
    c2 = sf * estimate_C2(spec, c0, box_samples, box_samples)
    c3 = sf * estimate_C3(spec, c0, box_samples, box_samples)
    bt = blowup_time(n, c1, c2)
    T = choose_T(n, c1, c2, blowup_margin=blowup_margin)
    c4 = sf * n * ybar(T, n, c1, c2)
    consts = DeterminacyConstants(C0=c0, Lambda=lam, C1=c1, C2=c2, C3=c3,
                                  C4=c4, T=T, blowup_time=bt)
    _check_constants(consts, n)
    return consts


def _check_constants(consts, n):
    if not (0.0 < consts.T <= 1.0):
        raise ValueError(f"existence time out of range: T={consts.T}")
    if not consts.T < consts.blowup_time:
        raise ValueError("existence time reaches the barrier pole")
    integral = ybar_integral(consts.T, n, consts.C1, consts.C2)
    if integral > 1.0 + INTEGRAL_TOL:
        raise ValueError(f"barrier integral {integral} exceeds 1")


def trapezoid_for(spec, consts):
    return Trapezoid(spec.a, spec.b, consts.Lambda, consts.T)
