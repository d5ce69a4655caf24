"""Built-in nuisance learners behind one small interface.

Each fit takes (design rows, targets) and returns an evaluable predictor,
so richer learners can be plugged in later without touching the
estimation layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, SingularDesign

RIDGE_FALLBACK = 1e-6

FLAG_SINGULAR = "singular_design_ridge_fallback"
FLAG_NONCONVERGED = "logistic_nonconvergence"


@dataclass(frozen=True)
class LearnerSpec:
    """Choice of built-in learner plus its hyperparameters.

    kind: one of {"ols", "ridge", "logistic", "kernel_smoother"}.
    ridge_lambda applies to "ridge"; bandwidth to "kernel_smoother";
    dose_degree (1 or 2) controls the polynomial-in-dose design used by
    the treated outcome regression.
    """

    kind: str = "ols"
    ridge_lambda: float = 0.0
    bandwidth: float | None = None
    dose_degree: int = 1

    def __post_init__(self):
        if self.kind not in ("ols", "ridge", "logistic", "kernel_smoother"):
            raise InvalidParameter(f"unknown learner kind {self.kind!r}")
        if self.kind == "ridge" and self.ridge_lambda < 0:
            raise InvalidParameter("ridge lambda must be >= 0")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise InvalidParameter("bandwidth must be > 0")
        if self.dose_degree not in (1, 2):
            raise InvalidParameter("dose_degree must be 1 or 2")


@dataclass(frozen=True)
class LearnerSet:
    """Learner choices for the three regression-type nuisance fits."""

    outcome_treated: LearnerSpec = LearnerSpec("ols")
    outcome_untreated: LearnerSpec = LearnerSpec("ols")
    propensity: LearnerSpec = LearnerSpec("logistic")


def add_intercept(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    return np.column_stack([np.ones(x.shape[0]), x])


class LinearPredictor:
    """Fitted linear map: predict(design) = design @ coef.

    coef may be (q,) for one target or (q, r) for multi-target fits.
    """

    def __init__(self, coef: np.ndarray, flags: tuple[str, ...] = ()):
        self.coef = np.asarray(coef, dtype=float)
        self.flags = tuple(flags)

    def predict(self, design: np.ndarray) -> np.ndarray:
        return np.asarray(design, dtype=float) @ self.coef


def _ridge_solve(design, y, lam):
    q = design.shape[1]
    penalty = lam * np.eye(q)
    penalty[0, 0] = 0.0  # intercept unpenalized
    return np.linalg.solve(design.T @ design + penalty, design.T @ y)


def fit_linear(design: np.ndarray, y: np.ndarray, ridge_lambda: float = 0.0) -> LinearPredictor:
    """Least squares with a ridge fallback when the design is rank deficient.

    ``y`` may be (n,) or (n, r); the multi-target form solves all columns
    against one factorization. Raises SingularDesign when there are fewer
    rows than design columns.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, q = design.shape
    if n < q:
        raise SingularDesign(f"{n} rows cannot identify {q} coefficients")
    flags: tuple[str, ...] = ()
    if ridge_lambda > 0.0:
        coef = _ridge_solve(design, y, ridge_lambda)
    else:
        coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        if rank < q:
            coef = _ridge_solve(design, y, RIDGE_FALLBACK)
            flags = (FLAG_SINGULAR,)
    return LinearPredictor(coef, flags)


def fit_learner(spec: LearnerSpec, design: np.ndarray, y: np.ndarray):
    """Dispatch a regression fit for ``spec``; returns an evaluable predictor."""
    if spec.kind == "ols":
        return fit_linear(design, y)
    if spec.kind == "ridge":
        return fit_linear(design, y, ridge_lambda=spec.ridge_lambda)
    if spec.kind == "kernel_smoother":
        return KernelSmoother(design, y, bandwidth=spec.bandwidth)
    raise InvalidParameter(f"{spec.kind!r} is not a regression learner")


class LogisticPredictor:
    def __init__(self, coef: np.ndarray, converged: bool, iterations: int):
        self.coef = np.asarray(coef, dtype=float)
        self.converged = converged
        self.iterations = iterations
        self.flags = () if converged else (FLAG_NONCONVERGED,)

    def predict(self, design: np.ndarray) -> np.ndarray:
        eta = np.clip(np.asarray(design, dtype=float) @ self.coef, -35.0, 35.0)
        return 1.0 / (1.0 + np.exp(-eta))


def fit_logistic(design: np.ndarray, y: np.ndarray, max_iter: int = 100,
                 tol: float = 1e-10) -> LogisticPredictor:
    """Newton-Raphson logistic regression.

    Stops after ``max_iter`` iterations; a non-converged fit (e.g. under
    separation) returns the last iterate flagged instead of raising, and
    callers clamp the predicted probabilities.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, q = design.shape
    coef = np.zeros(q)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = np.clip(design @ coef, -35.0, 35.0)
        p = 1.0 / (1.0 + np.exp(-eta))
        grad = design.T @ (y - p)
        w = np.maximum(p * (1.0 - p), 1e-10)
        hess = design.T @ (design * w[:, None]) + 1e-10 * np.eye(q)
        step = np.linalg.solve(hess, grad)
        coef = coef + step
        if np.max(np.abs(step)) < tol:
            converged = True
            break
    return LogisticPredictor(coef, converged, it)


class KernelSmoother:
    """Nadaraya-Watson regression with a Gaussian kernel.

    Features are standardized by their training scale; the bandwidth
    defaults to Scott's rule on the standardized features.
    """

    def __init__(self, design: np.ndarray, y: np.ndarray, bandwidth: float | None = None):
        design = np.asarray(design, dtype=float)
        # intercept column carries no information for a local average
        self._x = design[:, 1:] if design.shape[1] > 1 else design
        self._y = np.asarray(y, dtype=float)
        scale = self._x.std(axis=0, ddof=1) if len(self._x) > 1 else np.ones(self._x.shape[1])
        self._scale = np.where(scale > 0, scale, 1.0)
        n, p = self._x.shape
        if bandwidth is None:
            bandwidth = 1.06 * n ** (-1.0 / (4 + max(p, 1)))
        if bandwidth <= 0:
            raise InvalidParameter("bandwidth must be > 0")
        self.bandwidth = float(bandwidth)
        self.flags: tuple[str, ...] = ()

    def predict(self, design: np.ndarray) -> np.ndarray:
        design = np.asarray(design, dtype=float)
        xnew = design[:, 1:] if design.shape[1] > 1 else design
        z_train = self._x / self._scale
        z_new = xnew / self._scale
        d2 = ((z_new[:, None, :] - z_train[None, :, :]) ** 2).sum(axis=2)
        w = np.exp(-0.5 * d2 / self.bandwidth**2)
        denom = w.sum(axis=1)
        denom = np.where(denom > 0, denom, 1.0)
        if self._y.ndim == 1:
            return (w @ self._y) / denom
        return (w @ self._y) / denom[:, None]
