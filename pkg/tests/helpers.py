"""Shared test utilities: oracles and random-expression generation."""

from __future__ import annotations

import numpy as np

from charpicard import expr as ex

# ---------------------------------------------------------------------------
# Random expressions over the safe sub-grammar (total on real inputs)

_UNARIES = ("sin", "cos", "tanh", "neg")
_BINARIES = ("add", "sub", "mul")


def make_random_expr(rng, n, depth=3):
    """Random AST over x, t, u1..un with bounded magnitudes everywhere."""
    if depth == 0 or rng.random() < 0.25:
        r = rng.random()
        if r < 0.3:
            return ex.Var("x")
        if r < 0.5:
            return ex.Var("t")
        if r < 0.75 and n > 0:
            return ex.UVar(int(rng.integers(1, n + 1)))
        value = round(float(rng.uniform(-2.0, 2.0)), 3)
        # stay in the image of parse: negative literals are neg(Const)
        if value < 0:
            return ex.Unary("neg", ex.Const(-value))
        return ex.Const(value)
    r = rng.random()
    if r < 0.40:
        op = _UNARIES[int(rng.integers(len(_UNARIES)))]
        return ex.Unary(op, make_random_expr(rng, n, depth - 1))
    if r < 0.50:
        # bounded exponential: exp(0.25 * tanh(g))
        g = make_random_expr(rng, n, depth - 1)
        return ex.Unary("exp", ex.Binary(
            "mul", ex.Const(0.25), ex.Unary("tanh", g)))
    if r < 0.60:
        power = ex.Const(float(rng.integers(2, 4)))
        return ex.Binary("pow", make_random_expr(rng, n, depth - 1), power)
    if r < 0.70:
        # guarded division: denominator >= 2
        g = make_random_expr(rng, n, depth - 1)
        den = ex.Binary("add", ex.Const(2.0), ex.Binary("mul", g, g))
        return ex.Binary("div", make_random_expr(rng, n, depth - 1), den)
    op = _BINARIES[int(rng.integers(len(_BINARIES)))]
    return ex.Binary(op, make_random_expr(rng, n, depth - 1),
                     make_random_expr(rng, n, depth - 1))


def random_point(rng, n):
    return (float(rng.uniform(-1.5, 1.5)), float(rng.uniform(-1.5, 1.5)),
            [float(v) for v in rng.uniform(-1.0, 1.0, size=n)])


def central_difference(e, var, x, t, u, h=1e-5):
    """Independent derivative oracle for the expression language."""
    def at(xx, tt, uu):
        return ex.evaluate(e, xx, tt, uu)

    if var == "x":
        return (at(x + h, t, u) - at(x - h, t, u)) / (2.0 * h)
    if var == "t":
        return (at(x, t + h, u) - at(x, t - h, u)) / (2.0 * h)
    k = int(var[1:]) - 1
    up = list(u)
    um = list(u)
    up[k] += h
    um[k] -= h
    return (at(x, t, up) - at(x, t, um)) / (2.0 * h)


# ---------------------------------------------------------------------------
# Barrier ODE oracle: classical RK4 on Y' = c2 (1 + n Y)^2, Y(0) = c1

def rk4_barrier(n, c1, c2, ts, step=1e-5):
    """Integrate the barrier ODE and sample it at the sorted times ``ts``."""
    def f(y):
        return c2 * (1.0 + n * y) ** 2

    out = np.empty(len(ts))
    y = c1
    t = 0.0
    for idx, target in enumerate(ts):
        while t < target - 1e-15:
            h = min(step, target - t)
            k1 = f(y)
            k2 = f(y + 0.5 * h * k1)
            k3 = f(y + 0.5 * h * k2)
            k4 = f(y + h * k3)
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += h
        out[idx] = y
    return out


def rk4_barrier_batch(ns, c1s, c2s, nsteps, ncheck):
    """Vectorized barrier integration for many parameter draws.

    Each draw d is integrated over its own [0, tmax_d] split into
    ``nsteps`` uniform RK4 steps; returns (checkpoint times, values) with
    ``ncheck`` checkpoints per draw (every nsteps // ncheck steps).
    """
    ns = np.asarray(ns, dtype=float)
    c1s = np.asarray(c1s, dtype=float)
    c2s = np.asarray(c2s, dtype=float)
    tmax = np.where(c2s > 0,
                    0.9 / np.maximum(ns * c2s * (1.0 + ns * c1s), 1e-300),
                    1.0)
    tmax = np.minimum(tmax, 2.0)
    h = tmax / nsteps
    y = c1s.copy()
    stride = nsteps // ncheck
    times = np.empty((len(ns), ncheck))
    vals = np.empty((len(ns), ncheck))

    def f(yv):
        return c2s * (1.0 + ns * yv) ** 2

    cidx = 0
    for m in range(1, nsteps + 1):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if m % stride == 0 and cidx < ncheck:
            times[:, cidx] = m * h
            vals[:, cidx] = y
            cidx += 1
    return times, vals


# ---------------------------------------------------------------------------
# Field construction helpers

def fill_field(fld, fns):
    """Fill a field's values from callables u_i(x, t) (vectorized in x)."""
    times = fld.times
    for k in range(fld.levels + 1):
        lo, hi = int(fld.offsets[k]), int(fld.offsets[k + 1])
        xk = fld.xs[lo:hi]
        for i, fn in enumerate(fns):
            fld.values[i, lo:hi] = fn(xk, float(times[k]))
    return fld
