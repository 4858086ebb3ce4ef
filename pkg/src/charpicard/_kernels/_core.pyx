# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled backend for the hot kernels.

Same contract as ``fallback``: a postfix-program evaluator vectorized
over grid nodes and the batched backward characteristic sweep.  The
arithmetic mirrors the numpy backend operation for operation so the two
agree to rounding.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt, sin, cos, tanh, fabs, pow

cnp.import_array()

NAME = "compiled"
COMPILED = True

DEF MAXSTACK = 64

cdef enum:
    OP_CONST = 0
    OP_X = 1
    OP_T = 2
    OP_U = 3
    OP_ADD = 4
    OP_SUB = 5
    OP_MUL = 6
    OP_DIV = 7
    OP_POW = 8
    OP_NEG = 9
    OP_SIN = 10
    OP_COS = 11
    OP_EXP = 12
    OP_LOG = 13
    OP_SQRT = 14
    OP_TANH = 15
    OP_ABS = 16
    OP_SIGN = 17
    OP_BUMP = 18
    OP_DBUMP = 19


cdef void _vm(const int* code, const int* args, Py_ssize_t ncode,
              const double* consts,
              const double* x, double tval,
              const double* u, Py_ssize_t ustride,
              double* stack, Py_ssize_t m, double* out) noexcept nogil:
    cdef Py_ssize_t i, j, sp = -1
    cdef int op, arg
    cdef double* top
    cdef double* below
    cdef double v, w, r
    for i in range(ncode):
        op = code[i]
        arg = args[i]
        if op == OP_CONST:
            sp += 1
            top = stack + sp * m
            v = consts[arg]
            for j in range(m):
                top[j] = v
        elif op == OP_X:
            sp += 1
            top = stack + sp * m
            for j in range(m):
                top[j] = x[j]
        elif op == OP_T:
            sp += 1
            top = stack + sp * m
            for j in range(m):
                top[j] = tval
        elif op == OP_U:
            sp += 1
            top = stack + sp * m
            for j in range(m):
                top[j] = u[arg * ustride + j]
        elif op == OP_ADD:
            below = stack + (sp - 1) * m
            top = stack + sp * m
            for j in range(m):
                below[j] = below[j] + top[j]
            sp -= 1
        elif op == OP_SUB:
            below = stack + (sp - 1) * m
            top = stack + sp * m
            for j in range(m):
                below[j] = below[j] - top[j]
            sp -= 1
        elif op == OP_MUL:
            below = stack + (sp - 1) * m
            top = stack + sp * m
            for j in range(m):
                below[j] = below[j] * top[j]
            sp -= 1
        elif op == OP_DIV:
            below = stack + (sp - 1) * m
            top = stack + sp * m
            for j in range(m):
                below[j] = below[j] / top[j]
            sp -= 1
        elif op == OP_POW:
            below = stack + (sp - 1) * m
            top = stack + sp * m
            for j in range(m):
                below[j] = pow(below[j], top[j])
            sp -= 1
        else:
            top = stack + sp * m
            if op == OP_NEG:
                for j in range(m):
                    top[j] = -top[j]
            elif op == OP_SIN:
                for j in range(m):
                    top[j] = sin(top[j])
            elif op == OP_COS:
                for j in range(m):
                    top[j] = cos(top[j])
            elif op == OP_EXP:
                for j in range(m):
                    top[j] = exp(top[j])
            elif op == OP_LOG:
                for j in range(m):
                    top[j] = log(top[j])
            elif op == OP_SQRT:
                for j in range(m):
                    top[j] = sqrt(top[j])
            elif op == OP_TANH:
                for j in range(m):
                    top[j] = tanh(top[j])
            elif op == OP_ABS:
                for j in range(m):
                    top[j] = fabs(top[j])
            elif op == OP_SIGN:
                for j in range(m):
                    top[j] = (top[j] > 0.0) - (top[j] < 0.0)
            elif op == OP_BUMP:
                for j in range(m):
                    v = top[j]
                    w = 1.0 - v * v
                    top[j] = exp(-1.0 / w) if w > 0.0 else 0.0
            elif op == OP_DBUMP:
                for j in range(m):
                    v = top[j]
                    w = 1.0 - v * v
                    if w > 0.0:
                        r = exp(-1.0 / w) * (-2.0 * v) / w / w
                    else:
                        r = 0.0
                    top[j] = r
    for j in range(m):
        out[j] = stack[j]


cdef void _interp_pair(const double* values, Py_ssize_t nstride, int ncomp,
                       const double* starts, const double* steps,
                       const long* sizes, const long* offsets,
                       long k0, double theta,
                       const double* x, Py_ssize_t m,
                       double* out, Py_ssize_t ustride) noexcept nogil:
    cdef Py_ssize_t j
    cdef int c
    cdef long mlo = sizes[k0], blo = offsets[k0]
    cdef long mhi = 0, bhi = 0
    cdef double slo = starts[k0], stplo = steps[k0]
    cdef double shi = 0.0, stphi = 0.0
    cdef double pos, w0, w1, vlo, vhi
    cdef long j0, j1
    cdef const double* row
    if theta == 0.0:
        for j in range(m):
            pos = (x[j] - slo) / stplo
            if pos < 0.0:
                pos = 0.0
            elif pos > mlo - 1.0:
                pos = mlo - 1.0
            j0 = <long>pos
            if j0 > mlo - 2:
                j0 = mlo - 2
            w0 = pos - j0
            for c in range(ncomp):
                row = values + c * nstride + blo
                out[c * ustride + j] = row[j0] * (1.0 - w0) + row[j0 + 1] * w0
    else:
        mhi = sizes[k0 + 1]
        bhi = offsets[k0 + 1]
        shi = starts[k0 + 1]
        stphi = steps[k0 + 1]
        for j in range(m):
            pos = (x[j] - slo) / stplo
            if pos < 0.0:
                pos = 0.0
            elif pos > mlo - 1.0:
                pos = mlo - 1.0
            j0 = <long>pos
            if j0 > mlo - 2:
                j0 = mlo - 2
            w0 = pos - j0
            pos = (x[j] - shi) / stphi
            if pos < 0.0:
                pos = 0.0
            elif pos > mhi - 1.0:
                pos = mhi - 1.0
            j1 = <long>pos
            if j1 > mhi - 2:
                j1 = mhi - 2
            w1 = pos - j1
            for c in range(ncomp):
                row = values + c * nstride + blo
                vlo = row[j0] * (1.0 - w0) + row[j0 + 1] * w0
                row = values + c * nstride + bhi
                vhi = row[j1] * (1.0 - w1) + row[j1 + 1] * w1
                out[c * ustride + j] = vlo * (1.0 - theta) + vhi * theta


cdef Py_ssize_t _clamp(double* x, Py_ssize_t m, double tau,
                       double a, double b, double speed,
                       double ctol) noexcept nogil:
    cdef double lo = a + speed * tau
    cdef double hi = b - speed * tau
    cdef Py_ssize_t j
    for j in range(m):
        if not (x[j] >= lo - ctol and x[j] <= hi + ctol):
            return j
        if x[j] < lo:
            x[j] = lo
        elif x[j] > hi:
            x[j] = hi
    return -1


def eval_program(prog, x, tval, u):
    """Evaluate a compiled expression program over node arrays."""
    cdef cnp.ndarray[double, ndim=1] xa = \
        np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[int, ndim=1] code = prog.code
    cdef cnp.ndarray[int, ndim=1] args = prog.args
    cdef cnp.ndarray[double, ndim=1] consts = prog.consts
    cdef Py_ssize_t m = xa.shape[0]
    cdef cnp.ndarray[double, ndim=2] ua = \
        np.ascontiguousarray(u, dtype=np.float64).reshape(-1, m) \
        if u is not None and np.size(u) else np.zeros((1, m))
    cdef int need = max(prog.stack_need, 1)
    if need > MAXSTACK:
        raise ValueError("expression too deep for compiled backend")
    cdef cnp.ndarray[double, ndim=2] stack = np.empty((need, m))
    cdef cnp.ndarray[double, ndim=1] out = np.empty(m)
    cdef double tv = tval
    cdef const double* cp = NULL
    if consts.shape[0] > 0:
        cp = &consts[0]
    if m == 0:
        return out
    with nogil:
        _vm(&code[0], &args[0], code.shape[0], cp,
            &xa[0], tv, &ua[0, 0], m, &stack[0, 0], m, &out[0])
    return out


def picard_sweep(k, anchors, dt, substeps, lam_prog, h_prog, u0_prog,
                 starts, steps, sizes, offsets, values,
                 a, b, speed, clamp_tol):
    """Batched backward-trace update; see the fallback docstring."""
    cdef cnp.ndarray[double, ndim=1] xa = \
        np.ascontiguousarray(anchors, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] st = \
        np.ascontiguousarray(starts, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] sp = \
        np.ascontiguousarray(steps, dtype=np.float64)
    cdef cnp.ndarray[long, ndim=1] sz = \
        np.ascontiguousarray(sizes, dtype=np.int64)
    cdef cnp.ndarray[long, ndim=1] off = \
        np.ascontiguousarray(offsets, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=2] vals = \
        np.ascontiguousarray(values, dtype=np.float64)

    cdef cnp.ndarray[int, ndim=1] lcode = lam_prog.code
    cdef cnp.ndarray[int, ndim=1] largs = lam_prog.args
    cdef cnp.ndarray[double, ndim=1] lconsts = lam_prog.consts
    cdef cnp.ndarray[int, ndim=1] hcode = h_prog.code
    cdef cnp.ndarray[int, ndim=1] hargs = h_prog.args
    cdef cnp.ndarray[double, ndim=1] hconsts = h_prog.consts
    cdef cnp.ndarray[int, ndim=1] ucode = u0_prog.code
    cdef cnp.ndarray[int, ndim=1] uargs = u0_prog.args
    cdef cnp.ndarray[double, ndim=1] uconsts = u0_prog.consts

    cdef Py_ssize_t m = xa.shape[0]
    cdef int ncomp = vals.shape[0]
    cdef Py_ssize_t nstride = vals.shape[1]
    cdef int kk = k
    cdef int s = substeps
    cdef int two_s = 2 * s
    cdef long steps_total = kk * s
    cdef double ddt = dt
    cdef double delta = ddt / s
    cdef double half = 0.5 * delta
    cdef double sixth = delta / 6.0
    cdef double aa = a, bb = b, lam = speed, ctol = clamp_tol

    cdef int need = max(max(lam_prog.stack_need, h_prog.stack_need),
                        max(u0_prog.stack_need, 1))
    if need > MAXSTACK:
        raise ValueError("expression too deep for compiled backend")

    cdef cnp.ndarray[double, ndim=2] stack = np.empty((need, max(m, 1)))
    cdef cnp.ndarray[double, ndim=2] ubuf = np.empty((ncomp, max(m, 1)))
    cdef cnp.ndarray[double, ndim=1] x = xa.copy()
    cdef cnp.ndarray[double, ndim=1] xs = np.empty(m)
    cdef cnp.ndarray[double, ndim=1] k1 = np.empty(m)
    cdef cnp.ndarray[double, ndim=1] k2 = np.empty(m)
    cdef cnp.ndarray[double, ndim=1] k3 = np.empty(m)
    cdef cnp.ndarray[double, ndim=1] k4 = np.empty(m)
    cdef cnp.ndarray[double, ndim=1] quad = np.zeros(m)
    cdef cnp.ndarray[double, ndim=1] hprev = np.empty(m)
    cdef cnp.ndarray[double, ndim=1] hcur = np.empty(m)
    cdef cnp.ndarray[double, ndim=1] out = np.empty(m)

    cdef const double* lcp = &lconsts[0] if lconsts.shape[0] else NULL
    cdef const double* hcp = &hconsts[0] if hconsts.shape[0] else NULL
    cdef const double* ucp = &uconsts[0] if uconsts.shape[0] else NULL

    cdef long mstep, qa, qm, qb, whole, rem, k0a, k0m, k0b
    cdef double tha, thm, thb, tau_a, tau_m, tau_b
    cdef Py_ssize_t esc = -1, j
    cdef double esc_tau = 0.0

    if m == 0:
        return out, -1, 0.0

    with nogil:
        # anchor values and source at tau = t_k
        _interp_pair(&vals[0, 0], nstride, ncomp, &st[0], &sp[0], &sz[0],
                     &off[0], kk, 0.0, &x[0], m, &ubuf[0, 0], m)
        tau_a = 0.0 if steps_total == 0 else (2 * steps_total) * half
        _vm(&hcode[0], &hargs[0], hcode.shape[0], hcp, &x[0], tau_a,
            &ubuf[0, 0], m, &stack[0, 0], m, &hprev[0])

        for mstep in range(steps_total):
            qa = 2 * mstep
            qm = qa + 1
            qb = qa + 2
            tau_a = (2 * steps_total - qa) * half
            tau_m = (2 * steps_total - qm) * half
            tau_b = 0.0 if qb == 2 * steps_total \
                else (2 * steps_total - qb) * half

            whole = qm // two_s
            k0m = kk - whole - 1
            thm = 1.0 - (qm % two_s) / <double>two_s
            whole = qb // two_s
            rem = qb % two_s
            if rem == 0:
                k0b = kk - whole
                thb = 0.0
            else:
                k0b = kk - whole - 1
                thb = 1.0 - rem / <double>two_s

            _vm(&lcode[0], &largs[0], lcode.shape[0], lcp, &x[0], tau_a,
                &ubuf[0, 0], m, &stack[0, 0], m, &k1[0])
            for j in range(m):
                xs[j] = x[j] - half * k1[j]
            esc = _clamp(&xs[0], m, tau_m, aa, bb, lam, ctol)
            if esc >= 0:
                esc_tau = tau_m
                break
            _interp_pair(&vals[0, 0], nstride, ncomp, &st[0], &sp[0], &sz[0],
                         &off[0], k0m, thm, &xs[0], m, &ubuf[0, 0], m)
            _vm(&lcode[0], &largs[0], lcode.shape[0], lcp, &xs[0], tau_m,
                &ubuf[0, 0], m, &stack[0, 0], m, &k2[0])
            for j in range(m):
                xs[j] = x[j] - half * k2[j]
            esc = _clamp(&xs[0], m, tau_m, aa, bb, lam, ctol)
            if esc >= 0:
                esc_tau = tau_m
                break
            _interp_pair(&vals[0, 0], nstride, ncomp, &st[0], &sp[0], &sz[0],
                         &off[0], k0m, thm, &xs[0], m, &ubuf[0, 0], m)
            _vm(&lcode[0], &largs[0], lcode.shape[0], lcp, &xs[0], tau_m,
                &ubuf[0, 0], m, &stack[0, 0], m, &k3[0])
            for j in range(m):
                xs[j] = x[j] - delta * k3[j]
            esc = _clamp(&xs[0], m, tau_b, aa, bb, lam, ctol)
            if esc >= 0:
                esc_tau = tau_b
                break
            _interp_pair(&vals[0, 0], nstride, ncomp, &st[0], &sp[0], &sz[0],
                         &off[0], k0b, thb, &xs[0], m, &ubuf[0, 0], m)
            _vm(&lcode[0], &largs[0], lcode.shape[0], lcp, &xs[0], tau_b,
                &ubuf[0, 0], m, &stack[0, 0], m, &k4[0])

            for j in range(m):
                x[j] = x[j] - sixth * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j]
                                       + k4[j])
            esc = _clamp(&x[0], m, tau_b, aa, bb, lam, ctol)
            if esc >= 0:
                esc_tau = tau_b
                break

            _interp_pair(&vals[0, 0], nstride, ncomp, &st[0], &sp[0], &sz[0],
                         &off[0], k0b, thb, &x[0], m, &ubuf[0, 0], m)
            _vm(&hcode[0], &hargs[0], hcode.shape[0], hcp, &x[0], tau_b,
                &ubuf[0, 0], m, &stack[0, 0], m, &hcur[0])
            for j in range(m):
                quad[j] = quad[j] + half * (hprev[j] + hcur[j])
                hprev[j] = hcur[j]

        if esc < 0:
            _vm(&ucode[0], &uargs[0], ucode.shape[0], ucp, &x[0], 0.0,
                &ubuf[0, 0], m, &stack[0, 0], m, &out[0])
            for j in range(m):
                out[j] = out[j] + quad[j]

    if esc >= 0:
        return quad, int(esc), float(esc_tau)
    return out, -1, 0.0
