"""Pure-numpy backend for the hot kernels.

Mirrors the compiled extension (`_core`) operation for operation: a
postfix-program evaluator vectorized over grid nodes, bilinear field
interpolation on the trapezoid grid, and the batched backward
characteristic sweep that powers one Picard update of one time level.

Time-level bracketing along a trace is done in exact integer arithmetic
(half-step indices), never by dividing tau by dt, so values at grid time
levels never leak into neighbouring levels through rounding.
"""

from __future__ import annotations

import numpy as np

from ..expr import (OP_ABS, OP_ADD, OP_BUMP, OP_CONST, OP_COS, OP_DBUMP,
                    OP_DIV, OP_EXP, OP_LOG, OP_MUL, OP_NEG, OP_POW, OP_SIGN,
                    OP_SIN, OP_SQRT, OP_SUB, OP_T, OP_TANH, OP_U, OP_X)

NAME = "python"
COMPILED = False


def eval_program(prog, x, tval, u):
    """Evaluate a compiled expression program over node arrays.

    ``x``: float64[m]; ``tval``: scalar time; ``u``: float64[n, m] solution
    rows (may be empty when the program references no component).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    m = x.shape[0]
    stack = np.empty((max(prog.stack_need, 1), m))
    sp = -1
    code, args, consts = prog.code, prog.args, prog.consts
    with np.errstate(all="ignore"):
        for op, arg in zip(code, args):
            if op == OP_CONST:
                sp += 1
                stack[sp] = consts[arg]
            elif op == OP_X:
                sp += 1
                stack[sp] = x
            elif op == OP_T:
                sp += 1
                stack[sp] = tval
            elif op == OP_U:
                sp += 1
                stack[sp] = u[arg]
            elif op == OP_ADD:
                np.add(stack[sp - 1], stack[sp], out=stack[sp - 1])
                sp -= 1
            elif op == OP_SUB:
                np.subtract(stack[sp - 1], stack[sp], out=stack[sp - 1])
                sp -= 1
            elif op == OP_MUL:
                np.multiply(stack[sp - 1], stack[sp], out=stack[sp - 1])
                sp -= 1
            elif op == OP_DIV:
                np.divide(stack[sp - 1], stack[sp], out=stack[sp - 1])
                sp -= 1
            elif op == OP_POW:
                np.power(stack[sp - 1], stack[sp], out=stack[sp - 1])
                sp -= 1
            elif op == OP_NEG:
                np.negative(stack[sp], out=stack[sp])
            elif op == OP_SIN:
                np.sin(stack[sp], out=stack[sp])
            elif op == OP_COS:
                np.cos(stack[sp], out=stack[sp])
            elif op == OP_EXP:
                np.exp(stack[sp], out=stack[sp])
            elif op == OP_LOG:
                np.log(stack[sp], out=stack[sp])
            elif op == OP_SQRT:
                np.sqrt(stack[sp], out=stack[sp])
            elif op == OP_TANH:
                np.tanh(stack[sp], out=stack[sp])
            elif op == OP_ABS:
                np.abs(stack[sp], out=stack[sp])
            elif op == OP_SIGN:
                np.sign(stack[sp], out=stack[sp])
            elif op == OP_BUMP:
                v = stack[sp]
                w = 1.0 - v * v
                r = np.exp(-1.0 / w)
                r[w <= 0.0] = 0.0
                stack[sp] = r
            elif op == OP_DBUMP:
                v = stack[sp]
                w = 1.0 - v * v
                r = np.exp(-1.0 / w) * (-2.0 * v) / w / w
                r[w <= 0.0] = 0.0
                stack[sp] = r
            else:
                raise ValueError(f"bad opcode {op}")
    return stack[0].copy() if sp == 0 else stack[0]


def _interp_level(values, starts, steps, sizes, offsets, level, x):
    """Linear interpolation of all components within one time slice."""
    m = int(sizes[level])
    base = int(offsets[level])
    pos = (x - starts[level]) / steps[level]
    np.clip(pos, 0.0, m - 1.0, out=pos)
    j0 = pos.astype(np.int64)
    np.minimum(j0, m - 2, out=j0)
    w = pos - j0
    row = values[:, base:base + m]
    return row[:, j0] * (1.0 - w) + row[:, j0 + 1] * w


def interp_field(values, starts, steps, sizes, offsets, k0, theta, x):
    """Bilinear interpolation at time fraction ``k0 + theta`` levels."""
    lo = _interp_level(values, starts, steps, sizes, offsets, k0, x)
    if theta == 0.0:
        return lo
    hi = _interp_level(values, starts, steps, sizes, offsets, k0 + 1, x)
    return lo * (1.0 - theta) + hi * theta


def _clamp_stage(x, tau, a, b, speed, ctol):
    """Clamp node positions into the slice at time ``tau``.

    Returns the index of the first node escaping by more than ``ctol``,
    or -1 when all nodes stay inside (possibly after clamping).
    """
    lo = a + speed * tau
    hi = b - speed * tau
    # NaN positions (domain failure upstream) fail the inside test too
    inside = (x >= lo - ctol) & (x <= hi + ctol)
    if not inside.all():
        return int(np.argmax(~inside))
    np.clip(x, lo, hi, out=x)
    return -1


def _bracket(q, k, two_s):
    """Exact time-level bracket for half-step index ``q`` below level ``k``."""
    whole, rem = divmod(q, two_s)
    if rem == 0:
        return k - whole, 0.0
    return k - whole - 1, 1.0 - rem / float(two_s)


def picard_sweep(k, anchors, dt, substeps, lam_prog, h_prog, u0_prog,
                 starts, steps, sizes, offsets, values,
                 a, b, speed, clamp_tol):
    """One Picard update of one component on one time level.

    Traces the backward characteristic ODE from every anchor node of
    level ``k`` down to tau = 0 with classical RK4 (fixed step
    dt/substeps) through the frozen previous-iterate field, accumulating
    the composite-trapezoid quadrature of the source along the way, and
    returns ``u0(foot) + integral``.

    Returns ``(new_values, escape_index, escape_tau)``; ``escape_index``
    is -1 on success, otherwise the first anchor whose trace left the
    closed trapezoid by more than ``clamp_tol``.
    """
    s = int(substeps)
    two_s = 2 * s
    steps_total = k * s
    delta = dt / s
    half = 0.5 * delta
    sixth = delta / 6.0

    x = np.array(anchors, dtype=np.float64)
    m = x.shape[0]

    def u_at(q, pts):
        k0, th = _bracket(q, k, two_s)
        return interp_field(values, starts, steps, sizes, offsets, k0, th, pts)

    def tau_of(q):
        if q == 2 * steps_total:
            return 0.0
        return (2 * steps_total - q) * half

    ua = u_at(0, x)
    hprev = eval_program(h_prog, x, tau_of(0), ua)
    quad = np.zeros(m)

    for mstep in range(steps_total):
        qa = 2 * mstep
        qm = qa + 1
        qb = qa + 2
        tau_a = tau_of(qa)
        tau_m = tau_of(qm)
        tau_b = tau_of(qb)

        k1 = eval_program(lam_prog, x, tau_a, ua)
        xs = x - half * k1
        esc = _clamp_stage(xs, tau_m, a, b, speed, clamp_tol)
        if esc >= 0:
            return quad, esc, tau_m
        k2 = eval_program(lam_prog, xs, tau_m, u_at(qm, xs))
        xs = x - half * k2
        esc = _clamp_stage(xs, tau_m, a, b, speed, clamp_tol)
        if esc >= 0:
            return quad, esc, tau_m
        k3 = eval_program(lam_prog, xs, tau_m, u_at(qm, xs))
        xs = x - delta * k3
        esc = _clamp_stage(xs, tau_b, a, b, speed, clamp_tol)
        if esc >= 0:
            return quad, esc, tau_b
        k4 = eval_program(lam_prog, xs, tau_b, u_at(qb, xs))

        x = x - sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        esc = _clamp_stage(x, tau_b, a, b, speed, clamp_tol)
        if esc >= 0:
            return quad, esc, tau_b

        ua = u_at(qb, x)
        hcur = eval_program(h_prog, x, tau_b, ua)
        quad += half * (hprev + hcur)
        hprev = hcur

    out = eval_program(u0_prog, x, 0.0, ua) + quad
    return out, -1, 0.0
