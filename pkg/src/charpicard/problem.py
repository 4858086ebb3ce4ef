"""Problem instances: the diagonal system, its data, and validation.

A :class:`ProblemSpec` holds the number of equations ``n``, the initial
interval ``[a, b]`` and the expressions for the eigenvalues ``lam[i]``,
the source components ``h[i]`` and the initial data ``u0[i]`` (functions
of ``x`` only).  Validation samples an admissible box to check
smoothness surrogates: finite evaluation of all coefficients and their
first partials, initial data independent of ``t``, and pairwise
distinct eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import expr as ex
from ._kernels import fallback

HYPERBOLICITY_TOL = 1e-8


@dataclass(frozen=True)
class AdmissibleBox:
    """The sampling box: x in [a, b], t in [0, 1], |u| <= radius."""

    a: float
    b: float
    radius: float
    t_lo: float = 0.0
    t_hi: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("admissible-box radius must be positive")


def u_ball_samples(n, radius):
    """Deterministic probe points on the u-ball: center, axis points,
    and the diagonal direction on the surface (2n + 2 points)."""
    pts = [np.zeros(n)]
    for i in range(n):
        e = np.zeros(n)
        e[i] = radius
        pts.append(e.copy())
        pts.append(-e)
    pts.append(np.full(n, radius / np.sqrt(n)))
    return np.array(pts)


class _Programs:
    """Compiled programs for a spec: coefficients and first partials."""

    def __init__(self, spec):
        n = spec.n
        comp = ex.compile_program
        self.lam = [comp(e) for e in spec.lam]
        self.h = [comp(e) for e in spec.h]
        self.u0 = [comp(e) for e in spec.u0]
        self.lam_x = [comp(ex.diff(e, "x")) for e in spec.lam]
        self.lam_t = [comp(ex.diff(e, "t")) for e in spec.lam]
        self.h_x = [comp(ex.diff(e, "x")) for e in spec.h]
        self.h_t = [comp(ex.diff(e, "t")) for e in spec.h]
        self.lam_u = [[comp(ex.diff(e, f"u{k}")) for k in range(1, n + 1)]
                      for e in spec.lam]
        self.h_u = [[comp(ex.diff(e, f"u{k}")) for k in range(1, n + 1)]
                    for e in spec.h]
        self.u0_prime = [comp(ex.diff(e, "x")) for e in spec.u0]


@dataclass(frozen=True)
class ProblemSpec:
    """The system u_t + diag(lam) u_x = h with data u(x,0) = u0(x)."""

    n: int
    a: float
    b: float
    lam: tuple
    h: tuple
    u0: tuple

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if not self.a < self.b:
            raise ValueError(f"need a < b, got [{self.a}, {self.b}]")
        for name, exprs in (("lambda", self.lam), ("h", self.h),
                            ("u0", self.u0)):
            if len(exprs) != self.n:
                raise ValueError(f"{name} must have {self.n} entries")

    @classmethod
    def from_strings(cls, n, a, b, lam, h, u0):
        return cls(n=n, a=float(a), b=float(b),
                   lam=tuple(ex.parse(s, n) for s in lam),
                   h=tuple(ex.parse(s, n) for s in h),
                   u0=tuple(ex.parse(s, n) for s in u0))

    @cached_property
    def programs(self):
        return _Programs(self)


def spec_from_config(cfg):
    """Build a ProblemSpec from a parsed config mapping ([problem] table)."""
    try:
        prob = cfg["problem"]
        n = int(prob["n"])
        return ProblemSpec.from_strings(
            n, prob["a"], prob["b"],
            [str(s) for s in prob["lambda"]],
            [str(s) for s in prob["h"]],
            [str(s) for s in prob["u0"]])
    except KeyError as err:
        raise ValueError(f"config missing key: {err}") from None


@dataclass
class ValidationCheck:
    name: str
    passed: bool
    message: str = ""
    point: tuple = ()


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    @property
    def ok(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def summary(self):
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            extra = f" -- {c.message}" if c.message else ""
            lines.append(f"[{status}] {c.name}{extra}")
        return "\n".join(lines)


def _finite_scan(progs_named, spec, box, nx, nt):
    """Evaluate programs over the sampled box; return first bad point."""
    xg = np.linspace(box.a, box.b, nx)
    tg = np.linspace(box.t_lo, box.t_hi, nt)
    upts = u_ball_samples(spec.n, box.radius)
    for name, prog in progs_named:
        for tv in tg:
            for up in upts:
                u = np.broadcast_to(up[:, None], (spec.n, nx))
                vals = fallback.eval_program(prog, xg, tv, u)
                bad = ~np.isfinite(vals)
                if bad.any():
                    j = int(np.argmax(bad))
                    return name, (float(xg[j]), float(tv), tuple(up))
    return None


def validate(spec, box=None, samples=51, hyperbolicity_tol=HYPERBOLICITY_TOL):
    """Check a spec against the sampled admissible box.

    ``samples`` controls the number of x and t points of the tensor
    grid; the u-ball probes are fixed (2n + 2 points).  When ``box`` is
    omitted, a radius is derived from the sampled max of |u0| plus one.
    """
    report = ValidationReport()
    n = spec.n

    # initial data must be functions of x alone
    bad_ref = None
    for i, e in enumerate(spec.u0):
        extra = ex.references(e) - {"x"}
        if extra:
            bad_ref = (i, sorted(extra))
            break
    report.checks.append(ValidationCheck(
        "u0_depends_only_on_x", bad_ref is None,
        "" if bad_ref is None else
        f"u0[{bad_ref[0] + 1}] references {', '.join(bad_ref[1])}"))
    if bad_ref is not None:
        return report

    if box is None:
        xg = np.linspace(spec.a, spec.b, max(samples, 2))
        sup = np.zeros(xg.shape[0])
        for prog in spec.programs.u0:
            vals = fallback.eval_program(prog, xg, 0.0, None)
            sup += vals * vals
        c0 = float(np.sqrt(sup).max()) if np.isfinite(sup).all() else 0.0
        box = AdmissibleBox(spec.a, spec.b, c0 + 1.0)

    progs = spec.programs
    named = []
    for i in range(n):
        named.append((f"lambda[{i + 1}]", progs.lam[i]))
        named.append((f"h[{i + 1}]", progs.h[i]))
        named.append((f"d(lambda[{i + 1}])/dx", progs.lam_x[i]))
        named.append((f"d(lambda[{i + 1}])/dt", progs.lam_t[i]))
        named.append((f"d(h[{i + 1}])/dx", progs.h_x[i]))
        named.append((f"d(h[{i + 1}])/dt", progs.h_t[i]))
        for k in range(n):
            named.append((f"d(lambda[{i + 1}])/du{k + 1}", progs.lam_u[i][k]))
            named.append((f"d(h[{i + 1}])/du{k + 1}", progs.h_u[i][k]))

    bad = _finite_scan(named, spec, box, max(samples, 2), max(samples, 2))
    report.checks.append(ValidationCheck(
        "coefficients_finite_on_box", bad is None,
        "" if bad is None else f"{bad[0]} non-finite at {bad[1]}",
        () if bad is None else bad[1]))

    # initial data and slope finite on [a, b]
    xg = np.linspace(spec.a, spec.b, max(samples, 2))
    bad_u0 = None
    for i in range(n):
        for tag, prog in ((f"u0[{i + 1}]", progs.u0[i]),
                          (f"u0'[{i + 1}]", progs.u0_prime[i])):
            vals = fallback.eval_program(prog, xg, 0.0, None)
            mask = ~np.isfinite(vals)
            if mask.any():
                j = int(np.argmax(mask))
                bad_u0 = (tag, float(xg[j]))
                break
        if bad_u0:
            break
    report.checks.append(ValidationCheck(
        "initial_data_finite", bad_u0 is None,
        "" if bad_u0 is None else f"{bad_u0[0]} non-finite at x={bad_u0[1]}",
        () if bad_u0 is None else (bad_u0[1],)))

    # strict hyperbolicity at sample points
    if n >= 2:
        gap_fail = None
        tg = np.linspace(box.t_lo, box.t_hi, max(samples, 2))
        upts = u_ball_samples(n, box.radius)
        for tv in tg:
            for up in upts:
                u = np.broadcast_to(up[:, None], (n, xg.shape[0]))
                lams = np.array([fallback.eval_program(p, xg, tv, u)
                                 for p in progs.lam])
                lams_sorted = np.sort(lams, axis=0)
                gaps = np.diff(lams_sorted, axis=0)
                if gaps.size and gaps.min() < hyperbolicity_tol:
                    jj = np.unravel_index(np.argmin(gaps), gaps.shape)
                    gap_fail = (float(xg[jj[1]]), float(tv), tuple(up),
                                float(gaps[jj]))
                    break
            if gap_fail:
                break
        report.checks.append(ValidationCheck(
            "eigenvalues_pairwise_distinct", gap_fail is None,
            "" if gap_fail is None else
            f"gap {gap_fail[3]:.3e} below {hyperbolicity_tol} at "
            f"(x={gap_fail[0]}, t={gap_fail[1]}, u={gap_fail[2]})",
            () if gap_fail is None else gap_fail[:3]))
    else:
        report.checks.append(ValidationCheck(
            "eigenvalues_pairwise_distinct", True, "single equation"))

    return report
