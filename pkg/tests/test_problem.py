"""Problem specification and validation."""

import numpy as np
import pytest

from charpicard.problem import (AdmissibleBox, ProblemSpec, spec_from_config,
                                u_ball_samples, validate)


def test_constant_coefficient_smooth_data_passes():
    spec = ProblemSpec.from_strings(1, 0.0, 6.2832, ["1"], ["0"],
                                    ["sin(x)"])
    report = validate(spec)
    assert report.ok, report.summary()


def test_identical_eigenvalues_fail_distinctness():
    spec = ProblemSpec.from_strings(2, 0.0, 1.0, ["u1", "u1"], ["0", "0"],
                                    ["x", "x"])
    report = validate(spec)
    failed = {c.name for c in report.failures()}
    assert "eigenvalues_pairwise_distinct" in failed
    bad = [c for c in report.failures()
           if c.name == "eigenvalues_pairwise_distinct"][0]
    assert bad.point  # first offending sample point is reported


def test_initial_data_referencing_t_fails():
    spec = ProblemSpec.from_strings(1, 0.0, 1.0, ["1"], ["0"], ["sin(t)"])
    report = validate(spec)
    assert not report.ok
    assert report.failures()[0].name == "u0_depends_only_on_x"


def test_nonfinite_coefficient_detected():
    # log(x) is undefined at x = 0, inside [0, 1]
    spec = ProblemSpec.from_strings(1, 0.0, 1.0, ["log(x)"], ["0"], ["x"])
    report = validate(spec)
    failed = {c.name for c in report.failures()}
    assert "coefficients_finite_on_box" in failed


def test_validate_is_pure():
    spec = ProblemSpec.from_strings(2, 0.0, 2.0, ["1", "-1"], ["0", "0"],
                                    ["sin(x)", "cos(x)"])
    r1 = validate(spec, samples=21)
    r2 = validate(spec, samples=21)
    assert r1.summary() == r2.summary()
    assert r1.ok and r2.ok


def test_distinctness_respects_tolerance():
    spec = ProblemSpec.from_strings(2, 0.0, 1.0, ["1", "1 + 1e-12"],
                                    ["0", "0"], ["0", "0"])
    assert not validate(spec).ok
    assert validate(spec, hyperbolicity_tol=1e-13).ok


def test_spec_invariants():
    with pytest.raises(ValueError):
        ProblemSpec.from_strings(1, 1.0, 0.0, ["1"], ["0"], ["x"])
    with pytest.raises(ValueError):
        ProblemSpec.from_strings(2, 0.0, 1.0, ["1"], ["0", "0"],
                                 ["x", "x"])


def test_u_ball_samples_layout():
    pts = u_ball_samples(2, 3.0)
    assert pts.shape == (6, 2)
    norms = np.linalg.norm(pts, axis=1)
    assert norms[0] == 0.0
    assert np.allclose(norms[1:], 3.0)


def test_admissible_box_requires_positive_radius():
    with pytest.raises(ValueError):
        AdmissibleBox(0.0, 1.0, 0.0)


def test_spec_from_config():
    cfg = {"problem": {"n": 2, "a": 0.0, "b": 6.283185307179586,
                       "lambda": ["1 + 0.1*u2", "-1 + 0.1*u1"],
                       "h": ["0", "0"],
                       "u0": ["0.5*sin(x)", "0.5*cos(x)"]}}
    spec = spec_from_config(cfg)
    assert spec.n == 2
    assert spec.b == pytest.approx(2 * np.pi)
    assert validate(spec, samples=21).ok


def test_spec_from_config_missing_key():
    with pytest.raises(ValueError, match="missing key"):
        spec_from_config({"problem": {"n": 1}})
