import numpy as np
import pytest

from tiltdid import LearnerSpec
from tiltdid.errors import InvalidParameter, SingularDesign
from tiltdid.learners import (
    FLAG_NONCONVERGED,
    FLAG_SINGULAR,
    KernelSmoother,
    add_intercept,
    fit_linear,
    fit_logistic,
)


def test_learner_spec_validation():
    with pytest.raises(InvalidParameter):
        LearnerSpec("boosting")
    with pytest.raises(InvalidParameter):
        LearnerSpec("ridge", ridge_lambda=-1.0)
    with pytest.raises(InvalidParameter):
        LearnerSpec("kernel_smoother", bandwidth=0.0)
    with pytest.raises(InvalidParameter):
        LearnerSpec("ols", dose_degree=3)


def test_fit_linear_exact_recovery(rng):
    x = rng.random((200, 3))
    design = add_intercept(x)
    coef = np.array([1.0, -2.0, 0.5, 3.0])
    model = fit_linear(design, design @ coef)
    assert model.coef == pytest.approx(coef, abs=1e-10)
    assert model.flags == ()


def test_fit_linear_multi_target(rng):
    x = rng.random((100, 2))
    design = add_intercept(x)
    coefs = rng.standard_normal((3, 5))
    model = fit_linear(design, design @ coefs)
    assert model.coef == pytest.approx(coefs, abs=1e-9)
    assert model.predict(design).shape == (100, 5)


def test_fit_linear_singular_fallback(rng):
    x = rng.random(50)
    design = np.column_stack([np.ones(50), x, x])  # duplicated column
    model = fit_linear(design, 2.0 * x + 1.0)
    assert FLAG_SINGULAR in model.flags
    # predictions still recover the target despite the degenerate design
    assert model.predict(design) == pytest.approx(2.0 * x + 1.0, abs=1e-4)


def test_fit_linear_underdetermined_raises():
    design = np.ones((2, 4))
    with pytest.raises(SingularDesign):
        fit_linear(design, np.zeros(2))


def test_ridge_shrinks_toward_zero(rng):
    x = rng.random((100, 1))
    design = add_intercept(x)
    y = design @ np.array([0.0, 5.0]) + 0.01 * rng.standard_normal(100)
    free = fit_linear(design, y)
    shrunk = fit_linear(design, y, ridge_lambda=100.0)
    assert abs(shrunk.coef[1]) < abs(free.coef[1])


def test_logistic_recovers_coefficients(rng):
    n = 20000
    x = rng.random((n, 2))
    design = add_intercept(x)
    coef = np.array([-0.5, 1.0, -1.5])
    p = 1.0 / (1.0 + np.exp(-(design @ coef)))
    y = (rng.random(n) < p).astype(float)
    model = fit_logistic(design, y)
    assert model.converged
    assert model.coef == pytest.approx(coef, abs=0.15)


def test_logistic_separable_flags_nonconvergence():
    x = np.concatenate([np.linspace(-2, -0.5, 30), np.linspace(0.5, 2, 30)])
    y = (x > 0).astype(float)
    model = fit_logistic(add_intercept(x), y, max_iter=100)
    assert not model.converged
    assert FLAG_NONCONVERGED in model.flags
    preds = model.predict(add_intercept(x))
    assert np.all(np.isfinite(preds))
    assert preds[y == 1].min() > 0.99
    assert preds[y == 0].max() < 0.01


def test_logistic_intercept_only_matches_rate(rng):
    y = (rng.random(500) < 0.3).astype(float)
    design = np.ones((500, 1))
    model = fit_logistic(design, y)
    assert model.predict(design)[0] == pytest.approx(y.mean(), abs=1e-8)


def test_kernel_smoother_recovers_smooth_function(rng):
    n = 1500
    x = rng.random((n, 1))
    y = np.sin(2 * np.pi * x[:, 0]) + 0.05 * rng.standard_normal(n)
    model = KernelSmoother(add_intercept(x), y, bandwidth=0.05)
    x_new = np.linspace(0.1, 0.9, 9).reshape(-1, 1)
    pred = model.predict(add_intercept(x_new))
    assert pred == pytest.approx(np.sin(2 * np.pi * x_new[:, 0]), abs=0.1)


def test_kernel_smoother_constant_input(rng):
    y = rng.standard_normal(40)
    design = add_intercept(np.full((40, 1), 0.5))
    model = KernelSmoother(design, y, bandwidth=0.1)
    assert model.predict(design)[0] == pytest.approx(y.mean(), abs=1e-10)
