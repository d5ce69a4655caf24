"""Nuisance function fitting and evaluation.

Four fitted objects back the estimators: the dose-specific outcome
regression mu(d, x) among treated units, the untreated trend mu0(x), the
dichotomized propensity P(A > 0 | x), and the conditional dose density
pi(d | x) among treated units. Each is fit on caller-supplied training
rows only and is immutable afterwards, so fitted objects can be shared
across parallel fold evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import PanelDataset
from .errors import BandwidthNonPositive, InvalidParameter, SingularDesign
from .grid import DoseGrid
from .learners import (
    LearnerSet,
    LearnerSpec,
    add_intercept,
    fit_learner,
    fit_linear,
    fit_logistic,
)

DENSITY_FLOOR = 1e-3
PROPENSITY_CLAMP = (0.01, 0.99)
BANDWIDTH_CLIP = (0.02, 0.25)


@dataclass
class Diagnostics:
    """Counters for guardrails that fired during fitting/evaluation."""

    clamp_hits: int = 0
    floor_hits: int = 0
    flags: list[str] = field(default_factory=list)

    def merge(self, other: "Diagnostics") -> None:
        self.clamp_hits += other.clamp_hits
        self.floor_hits += other.floor_hits
        for flag in other.flags:
            if flag not in self.flags:
                self.flags.append(flag)

    def add_flags(self, flags) -> None:
        for flag in flags:
            if flag not in self.flags:
                self.flags.append(flag)

    def as_dict(self) -> dict:
        return {"clamp_hits": self.clamp_hits, "floor_hits": self.floor_hits,
                "flags": list(self.flags)}


# -- evaluable surfaces ------------------------------------------------------

class LinearOutcomeSurface:
    """mu(d, x) from a linear fit on [1, d, (d^2,) x]."""

    def __init__(self, coef: np.ndarray, dose_degree: int = 1, flags: tuple[str, ...] = ()):
        self.coef = np.asarray(coef, dtype=float)
        self.dose_degree = dose_degree
        self.flags = tuple(flags)

    def _design(self, d: np.ndarray, x: np.ndarray) -> np.ndarray:
        cols = [np.ones(len(d)), d]
        if self.dose_degree == 2:
            cols.append(d**2)
        return np.column_stack(cols + [x])

    def on_grid(self, x: np.ndarray, grid: DoseGrid) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        base = self.coef[0] + x @ self.coef[1 + self.dose_degree:]
        out = base[:, None] + self.coef[1] * grid.points[None, :]
        if self.dose_degree == 2:
            out = out + self.coef[2] * (grid.points**2)[None, :]
        return out

    def at_dose(self, x: np.ndarray, d: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = np.asarray(d, dtype=float)
        return self._design(d, x) @ self.coef


class SmootherOutcomeSurface:
    """mu(d, x) from a kernel smoother over the (d, x) design."""

    def __init__(self, model):
        self.model = model
        self.flags = tuple(getattr(model, "flags", ()))

    def on_grid(self, x: np.ndarray, grid: DoseGrid) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        out = np.empty((n, grid.size))
        for m, d in enumerate(grid.points):
            design = np.column_stack([np.ones(n), np.full(n, d), x])
            out[:, m] = self.model.predict(design)
        return out

    def at_dose(self, x: np.ndarray, d: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        design = np.column_stack([np.ones(x.shape[0]), np.asarray(d, dtype=float), x])
        return self.model.predict(design)


class FunctionOutcomeSurface:
    """mu(d, x) supplied directly as a vectorized pairwise function.

    ``fn(d, x)`` must accept doses (n,) paired with covariate rows (n, p)
    and return (n,); used to inject closed-form oracle surfaces.
    """

    def __init__(self, fn):
        self.fn = fn
        self.flags: tuple[str, ...] = ()

    def on_grid(self, x: np.ndarray, grid: DoseGrid) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        out = np.empty((n, grid.size))
        for m, d in enumerate(grid.points):
            out[:, m] = self.fn(np.full(n, d), x)
        return out

    def at_dose(self, x: np.ndarray, d: np.ndarray) -> np.ndarray:
        return self.fn(np.asarray(d, dtype=float), np.asarray(x, dtype=float))


class MeanPredictor:
    """x -> E[dY | x] map from a fitted predictor or a plain function."""

    def __init__(self, predictor=None, fn=None):
        if (predictor is None) == (fn is None):
            raise InvalidParameter("provide exactly one of predictor, fn")
        self._predictor = predictor
        self._fn = fn
        self.flags = tuple(getattr(predictor, "flags", ()))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._fn is not None:
            return np.asarray(self._fn(x), dtype=float)
        return self._predictor.predict(add_intercept(x))


class BinaryPropensity:
    """x -> P(A > 0 | x), always clamped to [0.01, 0.99].

    Clamp hits are counted on the fit's diagnostics so estimation reports
    how often the guardrail fired.
    """

    def __init__(self, predictor=None, fn=None, diagnostics: Diagnostics | None = None):
        if (predictor is None) == (fn is None):
            raise InvalidParameter("provide exactly one of predictor, fn")
        self._predictor = predictor
        self._fn = fn
        self.diagnostics = diagnostics if diagnostics is not None else Diagnostics()

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._fn is not None:
            raw = np.asarray(self._fn(x), dtype=float)
        else:
            raw = self._predictor.predict(add_intercept(x))
        lo, hi = PROPENSITY_CLAMP
        self.diagnostics.clamp_hits += int(np.sum((raw < lo) | (raw > hi)))
        return np.clip(raw, lo, hi)


def floor_and_normalize(rows: np.ndarray, grid: DoseGrid, floor: float = DENSITY_FLOOR,
                        max_iter: int = 200) -> tuple[np.ndarray, int]:
    """Raise density rows to the floor, then renormalize on the grid.

    Iterates floor/renormalize until both invariants hold at once: every
    value >= floor and every row integrates to 1 within 1e-8. Returns the
    adjusted rows and the count of entries initially below the floor.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    hits = int(np.sum(rows < floor))
    v = np.maximum(rows, floor)
    for _ in range(max_iter):
        v = v / (v @ grid.weights)[:, None]
        if np.all(v >= floor):
            break
        v = np.maximum(v, floor)
    return v, hits


class DoseDensity:
    """pi(d | x) evaluable on the grid, floored and quadrature-normalized.

    Backed either by per-grid-point linear coefficients from the
    kernel-transformed regression or by a direct density function (for
    oracle injection); both go through the same floor/normalize path so
    the positivity invariants hold regardless of the source.
    """

    def __init__(self, grid: DoseGrid, coef: np.ndarray | None = None, fn=None,
                 floor: float = DENSITY_FLOOR, diagnostics: Diagnostics | None = None,
                 flags: tuple[str, ...] = ()):
        if (coef is None) == (fn is None):
            raise InvalidParameter("provide exactly one of coef, fn")
        self.grid = grid
        self._coef = None if coef is None else np.asarray(coef, dtype=float)
        self._fn = fn
        self.floor = floor
        self.diagnostics = diagnostics if diagnostics is not None else Diagnostics()
        self.diagnostics.add_flags(flags)

    def rows(self, x: np.ndarray) -> np.ndarray:
        """Density rows (n, M) for covariate rows (n, p)."""
        x = np.asarray(x, dtype=float)
        if self._fn is not None:
            raw = np.asarray(self._fn(self.grid.points, x), dtype=float)
        else:
            raw = add_intercept(x) @ self._coef
        rows, hits = floor_and_normalize(raw, self.grid, self.floor)
        self.diagnostics.floor_hits += hits
        return rows

    def at_dose(self, x: np.ndarray, d: np.ndarray) -> np.ndarray:
        return self.grid.interp_at(self.rows(x), d)


@dataclass
class NuisanceFit:
    """Bundle of the four fitted nuisance functions.

    ``p_hat`` (the treated fraction of the evaluation set) is filled in at
    estimation time, not at fit time.
    """

    outcome_treated: object
    outcome_untreated: MeanPredictor
    binary_propensity: BinaryPropensity
    dose_density: DoseDensity
    grid: DoseGrid
    p_hat: float | None = None
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def collect_diagnostics(self) -> Diagnostics:
        out = Diagnostics()
        out.merge(self.diagnostics)
        out.merge(self.binary_propensity.diagnostics)
        out.merge(self.dose_density.diagnostics)
        return out


# -- fitting operations ------------------------------------------------------

def _check_rows(data: PanelDataset, rows: np.ndarray, want_treated: bool | None) -> np.ndarray:
    rows = np.asarray(rows, dtype=int)
    if rows.size == 0:
        raise SingularDesign("no training rows")
    if want_treated is True and not data.treated[rows].all():
        raise InvalidParameter("training rows must all be treated")
    if want_treated is False and data.treated[rows].any():
        raise InvalidParameter("training rows must all be untreated")
    return rows


def fit_outcome_treated(data: PanelDataset, rows: np.ndarray,
                        learner: LearnerSpec = LearnerSpec("ols")):
    """Fit the dose-specific outcome regression mu(d, x) on treated rows.

    The default design is [1, d, x] (linear in dose); dose_degree=2 on the
    learner adds a quadratic dose column.
    """
    rows = _check_rows(data, rows, want_treated=True)
    p = data.n_covariates
    if rows.size < p + 2:
        raise SingularDesign(f"need at least {p + 2} treated rows, have {rows.size}")
    d = data.a[rows]
    x = data.x[rows]
    cols = [np.ones(rows.size), d]
    if learner.dose_degree == 2:
        cols.append(d**2)
    design = np.column_stack(cols + [x])
    model = fit_learner(learner, design, data.dy[rows])
    if learner.kind == "kernel_smoother":
        return SmootherOutcomeSurface(model)
    return LinearOutcomeSurface(model.coef, dose_degree=learner.dose_degree, flags=model.flags)


def fit_outcome_untreated(data: PanelDataset, rows: np.ndarray,
                          learner: LearnerSpec = LearnerSpec("ols")) -> MeanPredictor:
    """Fit the untreated trend mu0(x) by regressing dY on x among untreated rows."""
    rows = _check_rows(data, rows, want_treated=False)
    design = add_intercept(data.x[rows])
    model = fit_learner(learner, design, data.dy[rows])
    return MeanPredictor(predictor=model)


def fit_binary_propensity(data: PanelDataset, rows: np.ndarray,
                          learner: LearnerSpec = LearnerSpec("logistic")) -> BinaryPropensity:
    """Fit P(A > 0 | x) by Newton logistic regression; outputs are clamped."""
    rows = np.asarray(rows, dtype=int)
    y = data.treated[rows].astype(float)
    if y.min() == y.max():
        raise InvalidParameter("propensity training rows need both treated and untreated units")
    if learner.kind != "logistic":
        raise InvalidParameter("binary propensity uses the logistic learner")
    model = fit_logistic(add_intercept(data.x[rows]), y)
    diag = Diagnostics()
    diag.add_flags(model.flags)
    return BinaryPropensity(predictor=model, diagnostics=diag)


def auto_bandwidth(doses: np.ndarray) -> float:
    """Scott's rule on the treated doses, clipped to [0.02, 0.25]."""
    doses = np.asarray(doses, dtype=float)
    sd = doses.std(ddof=1) if doses.size > 1 else 0.0
    b = 1.06 * sd * doses.size ** (-0.2)
    return float(np.clip(b, *BANDWIDTH_CLIP))


def fit_dose_density(data: PanelDataset, rows: np.ndarray, grid: DoseGrid,
                     bandwidth: float | str | None = "auto") -> DoseDensity:
    """Fit pi(d | x) via the kernel-transformed outcome regression.

    For each grid node d_m the pseudo-outcome Z_m = K_b(D - d_m) (Gaussian
    kernel, bandwidth b) is regressed on x; the fitted surface is floored
    at 1e-3 and renormalized on the grid, which doubles as the boundary
    correction for kernel estimation on (0, 1].
    """
    rows = _check_rows(data, rows, want_treated=True)
    doses = data.a[rows]
    if bandwidth in ("auto", None):
        bandwidth = auto_bandwidth(doses)
    bandwidth = float(bandwidth)
    if bandwidth <= 0:
        raise BandwidthNonPositive(f"bandwidth must be > 0, got {bandwidth}")
    z = np.exp(-0.5 * ((doses[:, None] - grid.points[None, :]) / bandwidth) ** 2)
    z /= bandwidth * np.sqrt(2.0 * np.pi)
    model = fit_linear(add_intercept(data.x[rows]), z)
    return DoseDensity(grid=grid, coef=model.coef, flags=model.flags)


def fit_all(data: PanelDataset, rows: np.ndarray, grid: DoseGrid,
            learners=None, bandwidth: float | str | None = "auto") -> NuisanceFit:
    """Fit all four nuisance functions on ``rows`` (a training split)."""
    learners = learners if learners is not None else LearnerSet()
    rows = np.asarray(rows, dtype=int)
    treated_rows = rows[data.treated[rows]]
    untreated_rows = rows[~data.treated[rows]]
    mu = fit_outcome_treated(data, treated_rows, learners.outcome_treated)
    mu0 = fit_outcome_untreated(data, untreated_rows, learners.outcome_untreated)
    prop = fit_binary_propensity(data, rows, learners.propensity)
    dens = fit_dose_density(data, treated_rows, grid, bandwidth)
    fit = NuisanceFit(outcome_treated=mu, outcome_untreated=mu0,
                      binary_propensity=prop, dose_density=dens, grid=grid)
    fit.diagnostics.add_flags(mu.flags)
    fit.diagnostics.add_flags(mu0.flags)
    return fit
