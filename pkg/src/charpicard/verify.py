"""Exact-solution oracles and structural solver checks.

The registry holds problems with closed-form solutions on the computed
trapezoid; `dependence_cone_test` perturbs the initial data outside the
inflated backward cone of a probe point and measures the induced change
(the domain-of-determinacy property), and `convergence_order_test`
estimates the discretization order from a refinement ladder.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import expr as ex
from .characteristics import interp, trace
from .determinacy import compute_constants, in_domain, trapezoid_for
from .iteration import GridParams, solve
from .problem import ProblemSpec


@dataclass(frozen=True)
class ExactCase:
    """A registry problem plus its closed-form solution and derivatives."""

    name: str
    spec: ProblemSpec
    u: callable    # u(x, t) -> (n, m)
    ux: callable
    ut: callable


def _advection():
    spec = ProblemSpec.from_strings(
        1, 0.0, 2.0 * np.pi, ["1"], ["0"], ["sin(x)"])
    return ExactCase(
        "advection", spec,
        u=lambda x, t: np.asarray([np.sin(x - t)]),
        ux=lambda x, t: np.asarray([np.cos(x - t)]),
        ut=lambda x, t: np.asarray([-np.cos(x - t)]))


def _exp_source():
    spec = ProblemSpec.from_strings(
        1, 0.0, 1.0, ["1"], ["u1"], ["exp(x)"])
    return ExactCase(
        "exp_source", spec,
        u=lambda x, t: np.asarray([np.exp(x) * np.ones_like(t + x)]),
        ux=lambda x, t: np.asarray([np.exp(x) * np.ones_like(t + x)]),
        ut=lambda x, t: np.asarray([np.zeros_like(x + t)]))


def _burgers_rarefaction():
    spec = ProblemSpec.from_strings(
        1, -1.0, 1.0, ["u1"], ["0"], ["x"])
    return ExactCase(
        "burgers_rarefaction", spec,
        u=lambda x, t: np.asarray([x / (1.0 + t)]),
        ux=lambda x, t: np.asarray([np.ones_like(x) / (1.0 + t)]),
        ut=lambda x, t: np.asarray([-x / (1.0 + t) ** 2]))


def _decoupled_pair():
    spec = ProblemSpec.from_strings(
        2, 0.0, 2.0 * np.pi, ["1", "-1"], ["0", "0"],
        ["sin(x)", "cos(x)"])
    return ExactCase(
        "decoupled_pair", spec,
        u=lambda x, t: np.asarray([np.sin(x - t), np.cos(x + t)]),
        ux=lambda x, t: np.asarray([np.cos(x - t), -np.sin(x + t)]),
        ut=lambda x, t: np.asarray([-np.cos(x - t), -np.sin(x + t)]))


_REGISTRY = {
    "advection": _advection,
    "exp_source": _exp_source,
    "burgers_rarefaction": _burgers_rarefaction,
    "decoupled_pair": _decoupled_pair,
}


def registry_names():
    return sorted(_REGISTRY)


def exact_case(name):
    """Return the registry case ``name``; raises on unknown names."""
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(
            f"unknown case '{name}'; known: {', '.join(registry_names())}"
        ) from None


# ---------------------------------------------------------------------------
# Domain of determinacy

def _bump_expr(u0_expr, amplitude, center, width):
    """u0 + amplitude * bump((x - center)/width) as an AST."""
    s = ex.Binary("div",
                  ex.Binary("sub", ex.Var("x"), ex.Const(float(center))),
                  ex.Const(float(width)))
    bump = ex.Binary("mul", ex.Const(float(amplitude)), ex.Unary("bump", s))
    return ex.Binary("add", u0_expr, bump)


def dependence_cone_test(spec, trap, probe, amplitude=1e-3, seed=0,
                         constants=None, grid=None, inside=False,
                         margin=None, tol=1e-12, max_iter=80):
    """Change at ``probe`` caused by an initial-data bump.

    Solves the problem twice on identical grids: once as given and once
    with a compactly supported C-infinity bump added to the first
    component of the initial data.  With ``inside=False`` the bump
    support is placed outside the inflated backward cone of the probe
    (margin at least 3 dx + Lambda dtau), so the change measures
    numerical leakage across the domain of determinacy; ``inside=True``
    centers the bump at the probe's characteristic foot as a positive
    control.  Returns the max-norm change at the probe.
    """
    x_star, t_star = probe
    if not in_domain(x_star, t_star, trap):
        raise ValueError(f"probe {probe} outside the trapezoid")
    grid = grid or GridParams()
    if constants is None:
        constants = compute_constants(spec)
    dx = grid.resolve_dx(spec)
    dt = trap.T / grid.dt_levels
    if margin is None:
        margin = 3.0 * dx + trap.Lambda * dt / grid.substeps

    base = solve(spec, grid=grid, tol=tol, max_iter=max_iter,
                 constants=constants, trap=trap)

    rng = np.random.default_rng(seed)
    cone_lo = x_star - trap.Lambda * t_star - margin
    cone_hi = x_star + trap.Lambda * t_star + margin
    if inside:
        # positive control: aim at the probe's characteristic foot
        foot = trace(1, x_star, t_star, base.field, spec, trap,
                     grid.substeps).foot
        width = max(6.0 * dx, 0.02 * (spec.b - spec.a))
        width = min(width, 0.45 * (cone_hi - cone_lo))
        center = foot
    else:
        room_left = cone_lo - spec.a
        room_right = spec.b - cone_hi
        side_left = room_left >= room_right
        room = max(room_left, room_right)
        if room <= 8.0 * dx:
            raise ValueError("no room for an out-of-cone bump; move probe")
        width = min(0.3 * room, max(6.0 * dx, 0.02 * (spec.b - spec.a)))
        if side_left:
            lo, hi = spec.a + width, cone_lo - width
        else:
            lo, hi = cone_hi + width, spec.b - width
        center = float(rng.uniform(lo, hi)) if hi > lo else 0.5 * (lo + hi)

    u0_perturbed = (_bump_expr(spec.u0[0], amplitude, center, width),) \
        + spec.u0[1:]
    perturbed_spec = replace(spec, u0=u0_perturbed)
    bumped = solve(perturbed_spec, grid=grid, tol=tol, max_iter=max_iter,
                   constants=constants, trap=trap)

    v0 = interp(base.field, x_star, t_star)
    v1 = interp(bumped.field, x_star, t_star)
    return float(np.abs(v1 - v0).max())


# ---------------------------------------------------------------------------
# Grid convergence

@dataclass
class OrderResult:
    grids: list          # (dx, dt_levels) per rung
    errors: list         # max probe error per rung
    orders: list         # log2 ratios between consecutive rungs
    nodal_errors: list = None   # max error over grid nodes per rung
    finest: object = None       # SolveResult of the last rung (optional)

    @property
    def observed_order(self):
        return self.orders[-1]


def _probe_points(trap, count, seed):
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < count:
        t = float(rng.uniform(0.15 * trap.T, 0.85 * trap.T))
        lo, hi = trap.xlo(t), trap.xhi(t)
        pad = 0.1 * (hi - lo)
        pts.append((float(rng.uniform(lo + pad, hi - pad)), t))
    return pts


def _nodal_error(res, case):
    fld = res.field
    times = fld.times
    worst = 0.0
    for k in range(fld.levels + 1):
        lo, hi = int(fld.offsets[k]), int(fld.offsets[k + 1])
        exact = np.asarray(case.u(fld.xs[lo:hi], float(times[k])))
        worst = max(worst, float(np.abs(fld.values[:, lo:hi] - exact).max()))
    return worst


def convergence_order_test(name, grids=None, refinements=3, probes=160,
                           seed=7, tol=1e-8, constants=None,
                           base_intervals=100, base_levels=25,
                           keep_finest=False):
    """Observed discretization order of `solve` against the closed form.

    Runs the solver on a ladder of grids (dx and dt halved together) and
    measures the max-norm error at a fixed set of interior probe points
    through field interpolation; returns errors and their log2 ratios.
    Nodal max errors are recorded per rung as well, and the finest-rung
    SolveResult can be retained for reuse.
    """
    case = exact_case(name)
    spec = case.spec
    if constants is None:
        constants = compute_constants(spec)
    trap = trapezoid_for(spec, constants)
    if grids is None:
        grids = [((spec.b - spec.a) / (base_intervals * 2 ** g),
                  base_levels * 2 ** g) for g in range(refinements + 1)]
    pts = _probe_points(trap, probes, seed)

    errors = []
    nodal = []
    finest = None
    for rung, (dx, levels) in enumerate(grids):
        res = solve(spec, grid=GridParams(dx=dx, dt_levels=levels),
                    tol=tol, constants=constants, trap=trap)
        worst = 0.0
        for (px, pt) in pts:
            approx = interp(res.field, px, pt)
            exact = np.asarray(case.u(np.asarray([px]), pt)).reshape(-1)
            worst = max(worst, float(np.abs(approx - exact).max()))
        errors.append(worst)
        nodal.append(_nodal_error(res, case))
        if keep_finest and rung == len(grids) - 1:
            finest = res
    orders = [float(np.log2(errors[g] / errors[g + 1]))
              for g in range(len(errors) - 1)]
    return OrderResult(grids=list(grids), errors=errors, orders=orders,
                       nodal_errors=nodal, finest=finest)


def solve_case(name, grid=None, tol=1e-9, constants=None, **kwargs):
    """Solve a registry case and report the max nodal error vs closed form."""
    case = exact_case(name)
    spec = case.spec
    if constants is None:
        constants = compute_constants(spec)
    trap = trapezoid_for(spec, constants)
    res = solve(spec, grid=grid, tol=tol, constants=constants, trap=trap,
                **kwargs)
    return res, _nodal_error(res, case)
