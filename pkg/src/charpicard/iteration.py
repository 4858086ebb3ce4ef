"""The Picard scheme and its convergence monitoring.

Each sweep solves the semilinear transport problem with coefficients
frozen at the previous iterate: every node value is the initial datum at
the characteristic foot plus the source integral along the backward
trace.  The monitor records Z_nu (max-norm iterate differences), the
factorial contraction bound (beta tau)^nu e^(alpha tau) Zbar / nu!, the
discrete lemma oracle built from the recurrent integral inequality, and
the amplitude / slope bounds that define the domain of determinacy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield

import numpy as np

from ._kernels import get_backend
from .characteristics import (IterateField, TraceEscapeError, build_field,
                              clamp_tolerance, derivative_field,
                              time_derivative_values)
from .determinacy import compute_constants, trapezoid_for, ybar

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 50
LIP_AMP_SLACK = 0.05       # tolerated relative overshoot of (Lip)/(amp)
CONTRACTION_SLACK = 2.0    # discretization allowance on the lemma bound


@dataclass
class GridParams:
    """Discretization: dx target (default (b-a)/800), time levels, substeps."""

    dx: float = None
    dt_levels: int = 200
    substeps: int = 4

    def resolve_dx(self, spec):
        return self.dx if self.dx is not None else (spec.b - spec.a) / 800.0


@dataclass
class ConvergenceReport:
    Z: list = dfield(default_factory=list)
    alpha: float = 0.0
    beta: float = 0.0
    Zbar: float = 0.0
    lemma_bound: list = dfield(default_factory=list)
    lip_violation: list = dfield(default_factory=list)
    amp_violation: list = dfield(default_factory=list)
    iterations_used: int = 0
    converged: bool = False
    warnings: list = dfield(default_factory=list)

    def as_dict(self):
        return {"Z": self.Z, "alpha": self.alpha, "beta": self.beta,
                "Zbar": self.Zbar, "lemma_bound": self.lemma_bound,
                "lip_violation": self.lip_violation,
                "amp_violation": self.amp_violation,
                "iterations_used": self.iterations_used,
                "converged": self.converged, "warnings": self.warnings}


class NonConvergenceError(RuntimeError):
    """Picard iteration missed the tolerance within max_iter sweeps."""

    def __init__(self, report, result=None):
        z = report.Z[-1] if report.Z else math.nan
        super().__init__(
            f"no convergence after {report.iterations_used} iterations "
            f"(last Z = {z:.3e})")
        self.report = report
        self.result = result


@dataclass
class SolveResult:
    field: IterateField
    ux: IterateField
    ut: np.ndarray
    report: ConvergenceReport
    constants: object
    trap: object
    spec: object


# ---------------------------------------------------------------------------
# Scheme

def initial_field(spec, trap, grid=None, backend=None):
    """Seed iterate: the initial data extended constant in time."""
    grid = grid or GridParams()
    backend = backend or get_backend()
    fld = build_field(spec.n, trap, grid.resolve_dx(spec), grid.dt_levels,
                      nu=0)
    progs = spec.programs
    for k in range(fld.levels + 1):
        lo, hi = int(fld.offsets[k]), int(fld.offsets[k + 1])
        xk = fld.xs[lo:hi]
        for i in range(spec.n):
            fld.values[i, lo:hi] = backend.eval_program(progs.u0[i], xk,
                                                        0.0, None)
    if not np.isfinite(fld.values).all():
        raise ValueError("initial data evaluated non-finite on the grid")
    return fld


def picard_step(prev, spec, trap, substeps=4, backend=None):
    """One sweep of the scheme: new iterate from the frozen previous one.

    Every node of every level k >= 1 is recomputed by backward tracing
    and source quadrature; level 0 copies the previous iterate's initial
    data bit-exactly.  Deterministic and independent of evaluation
    order.
    """
    backend = backend or get_backend()
    progs = spec.programs
    ctol = clamp_tolerance(trap)
    new_values = prev.values.copy()
    for k in range(1, prev.levels + 1):
        lo, hi = int(prev.offsets[k]), int(prev.offsets[k + 1])
        anchors = prev.xs[lo:hi]
        for i in range(spec.n):
            vals, esc, esc_tau = backend.picard_sweep(
                k, anchors, prev.dt, substeps,
                progs.lam[i], progs.h[i], progs.u0[i],
                prev.starts, prev.steps, prev.sizes, prev.offsets,
                prev.values, trap.a, trap.b, trap.Lambda, ctol)
            if esc >= 0:
                raise TraceEscapeError(i + 1, float(anchors[esc]),
                                       float(k * prev.dt), float(esc_tau))
            new_values[i, lo:hi] = vals
    if not np.isfinite(new_values).all():
        i, j = np.argwhere(~np.isfinite(new_values))[0]
        k = int(np.searchsorted(prev.offsets, j, side="right")) - 1
        raise ValueError(
            f"non-finite value for component {i + 1} at node "
            f"(x={prev.xs[j]:.6g}, level {k}); coefficient left its domain")
    return prev.with_values(new_values, prev.nu + 1)


def _level_maxima(fld, ux_vals):
    """Per-level Euclidean-norm maxima of |u| and |u_x|."""
    amp = np.empty(fld.levels + 1)
    lip = np.empty(fld.levels + 1)
    for k in range(fld.levels + 1):
        lo, hi = int(fld.offsets[k]), int(fld.offsets[k + 1])
        amp[k] = np.sqrt((fld.values[:, lo:hi] ** 2).sum(axis=0)).max()
        lip[k] = np.sqrt((ux_vals[:, lo:hi] ** 2).sum(axis=0)).max()
    return amp, lip


def _bound_violations(fld, constants, spec):
    """Worst (value - bound) for the amplitude and slope bounds."""
    ux = derivative_field(fld)
    amp, lip = _level_maxima(fld, ux.values)
    times = fld.times
    ybars = np.array([ybar(min(float(t), constants.T), spec.n,
                           constants.C1, constants.C2) for t in times])
    amp_bound = constants.C0 + 1.0
    lip_bound = spec.n * ybars
    return float((amp - amp_bound).max()), float((lip - lip_bound).max())


def solve(spec, grid=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
          constants=None, trap=None, backend=None, safety_factor=None,
          collect_iterates=False):
    """Run the Picard scheme to its fixed point on the trapezoid grid.

    Returns a :class:`SolveResult`; raises :class:`NonConvergenceError`
    (carrying the report and the last iterate) when Z_nu stays above
    ``tol`` for ``max_iter`` sweeps.  Bound violations beyond the slack
    become report warnings, never errors.
    """
    grid = grid or GridParams()
    backend = backend or get_backend()
    if constants is None:
        kwargs = {}
        if safety_factor is not None:
            kwargs["safety_factor"] = safety_factor
        constants = compute_constants(spec, **kwargs)
    if trap is None:
        trap = trapezoid_for(spec, constants)

    beta = spec.n * constants.C3 * (1.0 + constants.C4)
    report = ConvergenceReport(alpha=0.0, beta=beta)
    fld = initial_field(spec, trap, grid, backend)
    iterates = [fld] if collect_iterates else None

    converged = False
    for nu in range(1, max_iter + 1):
        new = picard_step(fld, spec, trap, grid.substeps, backend)
        z = new.max_abs_diff(fld)
        report.Z.append(z)
        if nu == 1:
            report.Zbar = z
        report.lemma_bound.append(
            lemma_bound(0.0, beta, report.Zbar, nu - 1, constants.T))
        amp_v, lip_v = _bound_violations(new, constants, spec)
        report.amp_violation.append(amp_v)
        report.lip_violation.append(lip_v)
        report.iterations_used = nu
        fld = new
        if collect_iterates:
            iterates.append(fld)
        if z <= tol:
            converged = True
            break
    report.converged = converged

    _append_bound_warnings(report, constants, spec)
    ux = derivative_field(fld)
    ut = time_derivative_values(fld, ux, spec, backend)
    result = SolveResult(fld, ux, ut, report, constants, trap, spec)
    if collect_iterates:
        result.iterates = iterates
    if not converged:
        raise NonConvergenceError(report, result)
    return result


def _append_bound_warnings(report, constants, spec):
    amp_bound = constants.C0 + 1.0
    for nu0, v in enumerate(report.amp_violation):
        if v > LIP_AMP_SLACK * amp_bound:
            report.warnings.append(
                f"amplitude bound exceeded by {v:.3e} at iterate {nu0 + 1}")
    lip_bound0 = spec.n * constants.C1 if constants.C1 > 0 else 1.0
    for nu0, v in enumerate(report.lip_violation):
        if v > LIP_AMP_SLACK * lip_bound0:
            report.warnings.append(
                f"slope bound exceeded by {v:.3e} at iterate {nu0 + 1}")
    for nu0, z in enumerate(report.Z):
        nu = nu0 + 1
        if nu < 2:
            continue
        bound = lemma_bound(0.0, report.beta,
                            CONTRACTION_SLACK * report.Zbar, nu - 1,
                            constants.T)
        if z > bound > 0.0:
            rel = z / bound - 1.0
            report.warnings.append(
                f"contraction bound exceeded by {100 * rel:.1f}% at "
                f"iterate {nu}")


# ---------------------------------------------------------------------------
# Lemma: closed form and discrete oracle

def lemma_bound(alpha, beta, zbar, nu, tau):
    """Closed-form bound (beta tau)^nu e^(alpha tau) zbar / nu!.

    Computed through logarithms so large nu cannot overflow; alpha = 0
    is accepted as the continuous limit of the lemma's hypothesis.
    """
    if nu < 0:
        raise ValueError("nu must be a nonnegative integer")
    if zbar == 0.0:
        return 0.0
    bt = beta * tau
    if nu == 0:
        return zbar * math.exp(alpha * tau)
    if bt == 0.0:
        return 0.0
    return zbar * math.exp(nu * math.log(bt) + alpha * tau
                           - math.lgamma(nu + 1.0))


def lemma_oracle(alpha, beta, zbar, nu_max, tau_grid):
    """Discrete lemma functions from the recurrent integral map.

    Starting from Z_0(tau) = zbar e^(alpha tau), repeatedly applies
    Z_nu(tau) = beta * integral_0^tau e^(alpha (tau - eta)) Z_{nu-1}(eta)
    d eta by composite trapezoid on the uniform ``tau_grid``.  Returns
    an array of shape (nu_max + 1, len(tau_grid)).
    """
    tau = np.asarray(tau_grid, dtype=np.float64)
    if tau.ndim != 1 or tau.shape[0] < 2:
        raise ValueError("tau_grid must be a 1-D grid")
    hstep = tau[1] - tau[0]
    out = np.empty((nu_max + 1, tau.shape[0]))
    decay = np.exp(-alpha * tau)
    grow = np.exp(alpha * tau)
    out[0] = zbar * grow
    for nu in range(1, nu_max + 1):
        g = decay * out[nu - 1]
        csum = np.concatenate(
            ([0.0], np.cumsum(0.5 * hstep * (g[1:] + g[:-1]))))
        out[nu] = beta * grow * csum
    return out


# ---------------------------------------------------------------------------
# Bound report for a complete field

@dataclass
class BoundReport:
    times: np.ndarray
    amp_max: np.ndarray
    amp_bound: float
    lip_max: np.ndarray
    ut_max: np.ndarray
    lip_bound: np.ndarray

    @property
    def worst_amp_violation(self):
        return float((self.amp_max - self.amp_bound).max())

    @property
    def worst_lip_violation(self):
        return float((self.lip_max - self.lip_bound).max())

    @property
    def worst_ut_violation(self):
        return float((self.ut_max - self.lip_bound).max())


def check_bounds(fld, constants, spec, backend=None):
    """Per-level amplitude and derivative maxima against the barrier."""
    ux = derivative_field(fld)
    ut = time_derivative_values(fld, ux, spec, backend)
    amp, lip = _level_maxima(fld, ux.values)
    utmax = np.empty(fld.levels + 1)
    for k in range(fld.levels + 1):
        lo, hi = int(fld.offsets[k]), int(fld.offsets[k + 1])
        utmax[k] = np.sqrt((ut[:, lo:hi] ** 2).sum(axis=0)).max()
    times = fld.times
    ybars = np.array([ybar(min(float(t), constants.T), spec.n,
                           constants.C1, constants.C2) for t in times])
    return BoundReport(times=times, amp_max=amp,
                       amp_bound=constants.C0 + 1.0, lip_max=lip,
                       ut_max=utmax, lip_bound=spec.n * ybars)
