"""Iterate fields on the trapezoid grid and characteristic tracing.

An :class:`IterateField` stores one Picard iterate sampled on the
discretized trapezoid: uniform time levels t_k = k*dt up to T, and per
level a uniform x grid spanning the slice [a + Lambda t_k, b - Lambda
t_k] with spacing at most the requested dx (endpoints included).

`trace` integrates the backward characteristic ODE for one component
from an anchor point to t = 0 with classical RK4 through the frozen
field, recording the path; `integrate_source` turns a trace into the
broad-solution value u0(foot) + integral of the source along the path,
and `integrate_variational` propagates the space-derivative diagnostic
along the same path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from ._kernels import get_backend
from .determinacy import in_domain


class OutsideDomainError(ValueError):
    """Query point outside the closed trapezoid beyond tolerance."""


class TraceEscapeError(RuntimeError):
    """A characteristic left the trapezoid: the speed bound is violated."""

    def __init__(self, component, x, t, tau, detail=""):
        msg = (f"characteristic {component} from (x={x:.6g}, t={t:.6g}) "
               f"escaped the trapezoid near tau={tau:.6g}")
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.component = component
        self.x = x
        self.t = t
        self.tau = tau


def clamp_tolerance(trap):
    """Permitted floating-point excursion outside the closed trapezoid."""
    return 1e-9 * (trap.b - trap.a)


class IterateField:
    """One iterate sampled on the trapezoid grid (ragged per-level rows)."""

    def __init__(self, n, trap, dt, starts, steps, sizes, offsets, xs,
                 values, nu=0):
        self.n = n
        self.trap = trap
        self.dt = dt
        self.starts = starts
        self.steps = steps
        self.sizes = sizes
        self.offsets = offsets
        self.xs = xs
        self.values = values
        self.nu = nu

    @property
    def levels(self):
        return self.sizes.shape[0] - 1

    @property
    def times(self):
        return np.arange(self.levels + 1) * self.dt

    def level_x(self, k):
        return self.xs[self.offsets[k]:self.offsets[k + 1]]

    def level_values(self, k):
        return self.values[:, self.offsets[k]:self.offsets[k + 1]]

    def with_values(self, values, nu):
        return IterateField(self.n, self.trap, self.dt, self.starts,
                            self.steps, self.sizes, self.offsets, self.xs,
                            values, nu)

    def max_abs_diff(self, other):
        return float(np.abs(self.values - other.values).max())


def build_field(n, trap, dx, levels, nu=0):
    """Allocate a zeroed field on the trapezoid grid."""
    levels = int(levels)
    if levels < 1:
        raise ValueError("need at least one time level")
    dt = trap.T / levels
    starts = np.empty(levels + 1)
    steps = np.empty(levels + 1)
    sizes = np.empty(levels + 1, dtype=np.int64)
    offsets = np.empty(levels + 2, dtype=np.int64)
    offsets[0] = 0
    xs_parts = []
    for k in range(levels + 1):
        tk = k * dt
        lo = trap.a + trap.Lambda * tk
        hi = trap.b - trap.Lambda * tk
        width = hi - lo
        m = max(2, int(math.ceil(width / dx - 1e-9)) + 1)
        starts[k] = lo
        steps[k] = width / (m - 1)
        sizes[k] = m
        offsets[k + 1] = offsets[k] + m
        xs_parts.append(lo + np.arange(m) * steps[k])
    xs = np.concatenate(xs_parts)
    values = np.zeros((n, xs.shape[0]))
    return IterateField(n, trap, dt, starts, steps, sizes, offsets, xs,
                        values, nu)


# ---------------------------------------------------------------------------
# Interpolation

def _snap(value, tol=1e-9):
    r = round(value)
    if abs(value - r) <= tol * max(1.0, abs(value)):
        return float(r)
    return value


def _time_bracket(t, field):
    """Level index and fraction for an arbitrary time (with node snap)."""
    kf = _snap(t / field.dt)
    k0 = int(math.floor(kf))
    k0 = min(max(k0, 0), field.levels - 1)
    theta = kf - k0
    theta = min(max(theta, 0.0), 1.0)
    if theta == 1.0:
        return k0 + 1, 0.0
    return k0, theta


def _level_lerp(field, k, x):
    m = int(field.sizes[k])
    pos = _snap((x - field.starts[k]) / field.steps[k])
    pos = min(max(pos, 0.0), m - 1.0)
    j0 = min(int(pos), m - 2)
    w = pos - j0
    row = field.values[:, field.offsets[k]:field.offsets[k] + m]
    if w == 0.0:
        return row[:, j0].copy()
    return row[:, j0] * (1.0 - w) + row[:, j0 + 1] * w


def interp(field, x, t):
    """Bilinear field interpolation at one point; exact at grid nodes.

    Linear in x within each of the two bracketing time levels (x clamped
    into each slice), then linear in t.  Raises OutsideDomainError when
    (x, t) leaves the closed trapezoid beyond tolerance.
    """
    tol = clamp_tolerance(field.trap)
    if not in_domain(x, t, field.trap, tol=tol):
        raise OutsideDomainError(
            f"point (x={x}, t={t}) outside the trapezoid")
    k0, theta = _time_bracket(t, field)
    lo = _level_lerp(field, k0, x)
    if theta == 0.0:
        return lo
    hi = _level_lerp(field, k0 + 1, x)
    return lo * (1.0 - theta) + hi * theta


# ---------------------------------------------------------------------------
# Backward characteristic tracing (single anchor, recorded path)

@dataclass
class CharacteristicTrace:
    component: int          # 1-based
    x: float
    t: float
    taus: np.ndarray        # descending from t to 0
    xs: np.ndarray          # positions X(tau)
    us: np.ndarray          # carried previous-iterate values, shape (M+1, n)

    @property
    def foot(self):
        return float(self.xs[-1])


def _field_arrays(field):
    return (field.starts, field.steps, field.sizes, field.offsets,
            field.values)


def _interp_unchecked(field, x, t):
    """Interpolation without the domain check (trace-internal)."""
    k0, theta = _time_bracket(t, field)
    lo = _level_lerp(field, k0, x)
    if theta == 0.0:
        return lo
    hi = _level_lerp(field, k0 + 1, x)
    return lo * (1.0 - theta) + hi * theta


def trace(i, x, t, prev, spec, trap, substeps=4):
    """Trace the i-th backward characteristic from (x, t) to tau = 0.

    Classical RK4 with fixed step dt/substeps (shortened uniformly so an
    integer number of steps reaches tau = 0 exactly); records tau,
    position and the carried previous-iterate values at every step
    endpoint.  Interior stage points may be clamped to the trapezoid
    boundary within the clamp tolerance; larger excursions raise
    :class:`TraceEscapeError`.
    """
    if not in_domain(x, t, trap, tol=clamp_tolerance(trap)):
        raise OutsideDomainError(f"anchor (x={x}, t={t}) not in trapezoid")
    lam_prog = spec.programs.lam[i - 1]
    ctol = clamp_tolerance(trap)
    backend = get_backend("python")

    def speed(xx, tau, u):
        return float(backend.eval_program(
            lam_prog, np.array([xx]), tau, u.reshape(-1, 1))[0])

    def clamp(xx, tau):
        lo, hi = trap.xlo(tau), trap.xhi(tau)
        if not (lo - ctol <= xx <= hi + ctol):
            raise TraceEscapeError(i, x, t, tau,
                                   "increase Lambda or check the field")
        return min(max(xx, lo), hi)

    if t <= 0.0:
        u0 = _interp_unchecked(prev, x, 0.0)
        return CharacteristicTrace(i, x, t, np.array([0.0]),
                                   np.array([x]), u0.reshape(1, -1))

    target = prev.dt / substeps
    nsteps = max(1, int(math.ceil(_snap(t / target))))
    delta = t / nsteps
    half = 0.5 * delta
    taus = np.empty(nsteps + 1)
    xs = np.empty(nsteps + 1)
    us = np.empty((nsteps + 1, spec.n))

    xx = float(x)
    taus[0] = t
    xs[0] = xx
    ua = _interp_unchecked(prev, xx, t)
    us[0] = ua
    for m in range(nsteps):
        tau_a = t - m * delta
        tau_b = 0.0 if m == nsteps - 1 else t - (m + 1) * delta
        tau_m = tau_a - half
        k1 = speed(xx, tau_a, ua)
        xs1 = clamp(xx - half * k1, tau_m)
        k2 = speed(xs1, tau_m, _interp_unchecked(prev, xs1, tau_m))
        xs2 = clamp(xx - half * k2, tau_m)
        k3 = speed(xs2, tau_m, _interp_unchecked(prev, xs2, tau_m))
        xs3 = clamp(xx - delta * k3, tau_b)
        k4 = speed(xs3, tau_b, _interp_unchecked(prev, xs3, tau_b))
        xx = clamp(xx - delta / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), tau_b)
        ua = _interp_unchecked(prev, xx, tau_b)
        taus[m + 1] = tau_b
        xs[m + 1] = xx
        us[m + 1] = ua
    return CharacteristicTrace(i, x, t, taus, xs, us)


def integrate_source(i, tr, spec):
    """Broad-solution value along a trace: u0_i(foot) + source integral."""
    h_expr = spec.h[i - 1]
    hvals = np.array([ex.evaluate(h_expr, tr.xs[m], tr.taus[m], tr.us[m])
                      for m in range(tr.taus.shape[0])])
    integral = float(np.trapezoid(hvals[::-1], tr.taus[::-1]))
    base = ex.evaluate(spec.u0[i - 1], tr.foot, 0.0, ())
    return base + integral


def integrate_variational(i, tr, prev, prev_dx, v0, spec):
    """Propagate v_i = du_i/dx along a trace from tau = 0 to the anchor.

    The right-hand side is h_x + h_u . u_x^prev - (lam_x + lam_u .
    u_x^prev) v, with the previous iterate and its space derivative
    interpolated from ``prev`` and ``prev_dx``.  RK4 in v; midpoint
    positions are averaged from the recorded path.
    """
    progs = spec.programs
    idx = i - 1
    backend = get_backend("python")

    def rhs(xx, tau, v):
        u = _interp_unchecked(prev, xx, tau)
        uxp = _interp_unchecked(prev_dx, xx, tau)
        args = (np.array([xx]), tau, u.reshape(-1, 1))
        hx = float(backend.eval_program(progs.h_x[idx], *args)[0])
        lx = float(backend.eval_program(progs.lam_x[idx], *args)[0])
        hu = 0.0
        lu = 0.0
        for k in range(spec.n):
            hu += float(backend.eval_program(progs.h_u[idx][k], *args)[0]) \
                * uxp[k]
            lu += float(backend.eval_program(progs.lam_u[idx][k], *args)[0]) \
                * uxp[k]
        return hx + hu - (lx + lu) * v

    v = float(v0)
    M = tr.taus.shape[0] - 1
    for m in range(M - 1, -1, -1):
        tau_lo, tau_hi = tr.taus[m + 1], tr.taus[m]
        x_lo, x_hi = tr.xs[m + 1], tr.xs[m]
        step = tau_hi - tau_lo
        x_mid = 0.5 * (x_lo + x_hi)
        tau_mid = 0.5 * (tau_lo + tau_hi)
        r1 = rhs(x_lo, tau_lo, v)
        r2 = rhs(x_mid, tau_mid, v + 0.5 * step * r1)
        r3 = rhs(x_mid, tau_mid, v + 0.5 * step * r2)
        r4 = rhs(x_hi, tau_hi, v + step * r3)
        v += step / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
    return v


# ---------------------------------------------------------------------------
# Discrete derivative fields

def derivative_field(field):
    """Second-order finite-difference x-derivative on each slice."""
    out = np.empty_like(field.values)
    for k in range(field.levels + 1):
        lo, hi = int(field.offsets[k]), int(field.offsets[k + 1])
        v = field.values[:, lo:hi]
        d = out[:, lo:hi]
        hstep = float(field.steps[k])
        m = hi - lo
        if m == 2:
            d[:, 0] = d[:, 1] = (v[:, 1] - v[:, 0]) / hstep
            continue
        d[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2.0 * hstep)
        d[:, 0] = (-3.0 * v[:, 0] + 4.0 * v[:, 1] - v[:, 2]) / (2.0 * hstep)
        d[:, -1] = (3.0 * v[:, -1] - 4.0 * v[:, -2] + v[:, -3]) \
            / (2.0 * hstep)
    return field.with_values(out, field.nu)


def time_derivative_values(field, ux_field, spec, backend=None):
    """Algebraic u_t = h - lam * u_x at every node of the field."""
    backend = backend or get_backend()
    out = np.empty_like(field.values)
    progs = spec.programs
    times = field.times
    for k in range(field.levels + 1):
        lo, hi = int(field.offsets[k]), int(field.offsets[k + 1])
        xk = field.xs[lo:hi]
        uk = field.values[:, lo:hi]
        uxk = ux_field.values[:, lo:hi]
        tv = float(times[k])
        for i in range(field.n):
            lam = backend.eval_program(progs.lam[i], xk, tv, uk)
            h = backend.eval_program(progs.h[i], xk, tv, uk)
            out[i, lo:hi] = h - lam * uxk[i]
    return out
