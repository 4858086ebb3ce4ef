"""Characteristic-based Picard solver for 1-D diagonal quasilinear
hyperbolic systems on their domain of determinacy."""

from ._kernels import HAVE_COMPILED, active_name, get_backend
from .characteristics import (CharacteristicTrace, IterateField,
                              OutsideDomainError, TraceEscapeError,
                              derivative_field, integrate_source,
                              integrate_variational, interp, trace)
from .determinacy import (DeterminacyConstants, Trapezoid, blowup_time,
                          choose_T, compute_constants, estimate_C0,
                          estimate_C1, estimate_C2, estimate_C3,
                          estimate_Lambda, in_domain, trapezoid_for, ybar,
                          ybar_integral)
from .expr import (DomainError, Expr, ExprError, ParseError, diff, evaluate,
                   parse, to_string)
from .iteration import (BoundReport, ConvergenceReport, GridParams,
                        NonConvergenceError, SolveResult, check_bounds,
                        initial_field, lemma_bound, lemma_oracle,
                        picard_step, solve)
from .problem import AdmissibleBox, ProblemSpec, ValidationReport, validate
from .verify import (convergence_order_test, dependence_cone_test,
                     exact_case, registry_names)

__version__ = "0.1.0"

__all__ = [
    "AdmissibleBox", "BoundReport", "CharacteristicTrace",
    "ConvergenceReport", "DeterminacyConstants", "DomainError", "Expr",
    "ExprError", "GridParams", "HAVE_COMPILED", "IterateField",
    "NonConvergenceError", "OutsideDomainError", "ParseError",
    "ProblemSpec", "SolveResult", "TraceEscapeError", "Trapezoid",
    "ValidationReport", "active_name", "blowup_time", "check_bounds",
    "choose_T", "compute_constants", "convergence_order_test",
    "dependence_cone_test", "derivative_field", "diff", "estimate_C0",
    "estimate_C1", "estimate_C2", "estimate_C3", "estimate_Lambda",
    "evaluate", "exact_case", "get_backend", "in_domain", "initial_field",
    "integrate_source", "integrate_variational", "interp", "lemma_bound",
    "lemma_oracle", "parse", "picard_step", "registry_names", "solve",
    "to_string", "trace", "trapezoid_for", "validate", "ybar",
    "ybar_integral",
]
