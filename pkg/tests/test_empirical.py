import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from evib.empirical import (ParameterSample, build_empirical_model, design_matrix, evaluate_model,
                            ols_fit, pearson, t_two_sided_p)
from evib.errors import (ExtrapolationWarning, InsufficientDataError, RankDeficiencyError,
                         ZeroVarianceError)
from evib.models import EmpiricalSpeedModel

SPEEDS = (20.0, 40.0, 60.0, 80.0, 100.0)
FORCES = (0.2, 0.3, 0.4, 0.5, 0.6)

# two-sided p from quad integration of the t density (frozen oracle values)
P_ORACLE = {(10, 0.632): 0.04995111218497717, (5, 0.8): 0.10408803866182784,
            (50, 0.3): 0.034286180032929915, (50, -0.25): 0.07994974436706347}


def _grid(fn, reps=1, parameter="omega_o"):
    out = []
    for v in SPEEDS:
        for F in FORCES:
            for p in range(reps):
                out.append(ParameterSample(v, F, str(p + 1), float(fn(v, F)), parameter))
    return out


def _with_r(n, r, seed=0):
    """xs, ys whose sample correlation is exactly r."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, 2))
    a -= a.mean(axis=0)
    q, _ = np.linalg.qr(a)
    return q[:, 0], r * q[:, 0] + math.sqrt(1 - r * r) * q[:, 1]


# --- ols_fit --------------------------------------------------------------

def test_ols_exact_recovery():
    fit = ols_fit(_grid(lambda v, F: 385.68 + 13.811 * v))
    assert fit.intercept == pytest.approx(385.68, abs=1e-6)
    assert fit.coef_speed == pytest.approx(13.811, abs=1e-6)
    assert abs(fit.coef_force) < 1e-6 and abs(fit.coef_interaction) < 1e-6
    assert fit.r2 == pytest.approx(1.0) and fit.n == 25


def test_ols_constant():
    fit = ols_fit(_grid(lambda v, F: 7.5))
    np.testing.assert_allclose(fit.coefs, [7.5, 0, 0, 0], atol=1e-9)


def test_ols_residuals_orthogonal(rng):
    samples = _grid(lambda v, F: 400 + 12 * v + 30 * F + rng.normal(0, 50), reps=4)
    fit = ols_fit(samples)
    X = design_matrix([s.speed for s in samples], [s.force for s in samples])
    y = np.array([s.value for s in samples])
    dots = X.T @ fit.residuals
    assert np.all(np.abs(dots) <= 1e-8 * np.linalg.norm(X, axis=0) * np.linalg.norm(y))


@pytest.mark.parametrize("k", range(4))
def test_ols_per_coefficient_coverage(k):
    truth = np.array([385.68, 0.0, 13.811, 0.0])
    hits = 0
    for seed in range(200):
        rng = np.random.default_rng(1000 + seed)
        fit = ols_fit(_grid(lambda v, F: 385.68 + 13.811 * v + rng.normal(0, 40), reps=10))
        hits += abs(fit.coefs[k] - truth[k]) <= 2 * fit.stderr[k]
    # nominal 2-SE coverage is 0.954; allow two Monte-Carlo standard errors over 200 seeds
    assert hits / 200 >= 0.93


def test_ols_errors():
    with pytest.raises(RankDeficiencyError):
        ols_fit([ParameterSample(40.0, F, "1", F) for F in FORCES * 2])
    with pytest.raises(InsufficientDataError):
        ols_fit(_grid(lambda v, F: 1.0)[:7])
    with pytest.raises(ValueError):
        ParameterSample(0.0, 0.3, "1", 1.0)
    with pytest.raises(ValueError):
        ParameterSample(40.0, 0.3, "1", float("nan"))


# --- pearson --------------------------------------------------------------

def test_pearson_perfect():
    xs = np.arange(10.0)
    out = pearson(xs, 2 * xs)
    assert out["r"] == pytest.approx(1.0) and out["p"] == 0.0 and out["n"] == 10
    assert pearson(xs, -xs)["r"] == pytest.approx(-1.0)


def test_pearson_independent():
    rng = np.random.default_rng(42)
    out = pearson(rng.normal(size=100), rng.normal(size=100))
    assert abs(out["r"]) < 0.3 and out["p"] > 0.001


@pytest.mark.parametrize("n,r", sorted(P_ORACLE))
def test_pearson_matches_integration_oracle(n, r):
    xs, ys = _with_r(n, r)
    out = pearson(xs, ys)
    assert out["r"] == pytest.approx(r, abs=1e-12)
    assert abs(out["p"] - P_ORACLE[n, r]) < 1e-4
    assert out["p"] == pytest.approx(P_ORACLE[n, r], rel=1e-9)


def test_t_two_sided_limits():
    assert t_two_sided_p(0.0, 5) == pytest.approx(1.0)
    assert t_two_sided_p(50.0, 30) < 1e-20
    # one degree of freedom is the Cauchy distribution
    assert t_two_sided_p(1.0, 1) == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100), st.floats(-100, 100))
def test_pearson_affine_invariant(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=12), rng.normal(size=12)
    base = pearson(x, y)
    assume(abs(base["r"]) < 0.999)
    moved = pearson(a * x + b, y)
    assert moved["r"] == pytest.approx(base["r"], abs=1e-9)
    assert moved["p"] == pytest.approx(base["p"], rel=1e-6)


def test_pearson_errors():
    with pytest.raises(ZeroVarianceError):
        pearson(np.ones(5), np.arange(5.0))
    with pytest.raises(InsufficientDataError):
        pearson([1.0, 2.0], [1.0, 3.0])
    with pytest.raises(ValueError):
        pearson(np.arange(4.0), np.arange(5.0))


# --- build_empirical_model --------------------------------------------------

def test_build_model_recovers_constants():
    rng = np.random.default_rng(5)
    K = _grid(lambda v, F: 0.0123 * (1 + 0.05 * rng.normal()), reps=4, parameter="K")
    om = _grid(lambda v, F: 385.68 + 13.811 * v + rng.normal(0, 20), reps=4)
    m = build_empirical_model(K, om)
    assert m.K_bar == pytest.approx(0.0123, rel=0.03)
    assert m.intercept == pytest.approx(385.68, rel=0.05)
    assert m.slope == pytest.approx(13.811, rel=0.05)


def test_build_model_single_sample():
    one = [ParameterSample(40.0, 0.3, "1", 500.0)]
    with pytest.raises(InsufficientDataError):
        build_empirical_model(one, one)
    with pytest.raises(InsufficientDataError):
        build_empirical_model([], _grid(lambda v, F: 1.0))


@pytest.mark.parametrize("amp", [0.02, 0.05, 0.1])
@pytest.mark.parametrize("kind", ["additive", "proportional"])
def test_build_model_force_contamination(amp, kind):
    # force-dependent errors up to amp of the cutoff leave the speed slope intact
    def law(v, F):
        base = 385.68 + 13.811 * v
        ref = base if kind == "proportional" else 385.68 + 13.811 * 60
        return base + amp * ref * (F - 0.4) / 0.2

    om = _grid(law)
    K = _grid(lambda v, F: 0.0123, parameter="K")
    m = build_empirical_model(K, om)
    assert m.slope == pytest.approx(13.811, rel=0.05)


# --- evaluate_model -------------------------------------------------------

def test_evaluate_examples():
    m = EmpiricalSpeedModel()
    assert abs(evaluate_model(m, 1e-6, 40.0)) == pytest.approx(0.0123, rel=1e-9)
    fc = 385.68 + 13.811 * 60
    assert abs(evaluate_model(m, fc, 60.0)) == pytest.approx(0.0123 / math.sqrt(2), rel=1e-12)
    assert abs(evaluate_model(m, 1766.78, 100.0)) == pytest.approx(0.0123 / math.sqrt(2), rel=1e-6)
    assert evaluate_model(m, [30.0, 60.0], 40.0).shape == (2,)


def test_evaluate_errors_and_flags():
    m = EmpiricalSpeedModel()
    with pytest.raises(ValueError):
        evaluate_model(m, 0.0, 40.0)
    with pytest.warns(ExtrapolationWarning):
        evaluate_model(m, 100.0, 150.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        evaluate_model(m, 100.0, 100.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(1.0, 5000.0), st.floats(1.0, 5000.0), st.floats(20.0, 100.0), st.floats(20.0, 100.0))
def test_evaluate_monotone(f1, f2, v1, v2):
    m = EmpiricalSpeedModel()
    lo, hi = sorted((f1, f2))
    assert abs(evaluate_model(m, hi, v1)) <= abs(evaluate_model(m, lo, v1))
    slow, fast = sorted((v1, v2))
    assert abs(evaluate_model(m, lo, fast)) >= abs(evaluate_model(m, lo, slow))
