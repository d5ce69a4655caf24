"""Plug-in and one-step cross-fitted estimators of the average stochastic
dose effect among the treated (ASDT), with influence-function variance.

The estimand contrasts the expected outcome trend under a counterfactual
dose distribution against the no-treatment trend, among treated units.
Estimation follows the efficient-influence-function recipe: a plug-in
term built from the fitted nuisance functions plus an empirical mean of
the estimated influence values, computed fold-by-fold with nuisances fit
out-of-fold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import PanelDataset, assign_folds
from .errors import (
    DoseOutsideGrid,
    InvalidParameter,
    NoUntreatedUnits,
    TiltDidError,
    UnsupportedInterventionForOneStep,
)
from .grid import DoseGrid
from .interventions import (
    DensityCurve,
    InterventionSpec,
    apply_to_rows,
    parametric_values,
    tilt_rows,
)
from .learners import LearnerSet
from .nuisance import Diagnostics, NuisanceFit, fit_all

DEFAULT_GRID_SIZE = 101
DEFAULT_CI_LEVEL = 0.95


@dataclass(frozen=True)
class EstimateResult:
    """Point estimate with influence-function inference and fold detail.

    ``psi_hat`` is the fold-size-weighted mean of the per-fold estimates;
    ``se``/``ci_*`` are None for plug-in-only interventions that carry no
    influence-function standard error.
    """

    psi_hat: float
    se: float | None
    ci_low: float | None
    ci_high: float | None
    ci_level: float
    sigma2_hat: float | None
    psi1_hat: float
    psi2_hat: float
    n: int
    k_folds: int
    seed: int | None
    intervention: str
    delta: float | None
    per_fold: tuple[tuple[int, float, int], ...]
    eif_values: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.se is not None:
            if self.se < 0:
                raise InvalidParameter("standard error must be >= 0")
            if not (self.ci_low <= self.psi_hat <= self.ci_high):
                raise InvalidParameter("confidence interval must bracket the estimate")
        if self.eif_values is not None:
            arr = np.ascontiguousarray(self.eif_values, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, "eif_values", arr)

    def to_dict(self) -> dict:
        return {
            "psi_hat": self.psi_hat,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "ci_level": self.ci_level,
            "sigma2_hat": self.sigma2_hat,
            "psi1_hat": self.psi1_hat,
            "psi2_hat": self.psi2_hat,
            "n": self.n,
            "k_folds": self.k_folds,
            "seed": self.seed,
            "intervention": self.intervention,
            "delta": self.delta,
            "per_fold": [list(row) for row in self.per_fold],
            "eif_values": None if self.eif_values is None else list(map(float, self.eif_values)),
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class FoldEstimate:
    """One fold's estimate plus its centered per-unit influence values.

    ``phi`` is centered at the fold's one-step component estimates, so it
    averages to zero exactly; ``psi - psi_plugin`` equals the mean of the
    two correction terms, which is the one-step construction identity.
    """

    fold_id: int
    n_fold: int
    p_hat: float
    psi: float
    psi1: float
    psi2: float
    psi_plugin: float
    psi1_plugin: float
    psi2_plugin: float
    correction1: float
    correction2: float
    phi: np.ndarray


class _FoldContext:
    """Per-fold evaluation workspace shared across intervention parameters.

    Everything that does not depend on the intervention (outcome surface
    on the grid, fitted dose density rows and their values at the observed
    doses, propensity-ratio weights) is computed once, so sweeping a delta
    grid only re-tilts and re-integrates.
    """

    def __init__(self, data: PanelDataset, eval_rows: np.ndarray, fit: NuisanceFit,
                 literal_phi2_weight: bool = False):
        eval_rows = np.asarray(eval_rows, dtype=int)
        self.fold_rows = eval_rows
        self.n_fold = eval_rows.size
        treated_mask = data.treated[eval_rows]
        if not treated_mask.any() or treated_mask.all():
            raise InvalidParameter("evaluation fold needs both treated and untreated units")
        self.treated_mask = treated_mask
        self.p_hat = float(treated_mask.mean())
        self.grid = fit.grid

        x_t = data.x[eval_rows[treated_mask]]
        x_u = data.x[eval_rows[~treated_mask]]
        self.dy_t = data.dy[eval_rows[treated_mask]]
        self.dy_u = data.dy[eval_rows[~treated_mask]]
        self.d_t = data.a[eval_rows[treated_mask]]
        if np.any(self.d_t <= 0.0) or np.any(self.d_t > 1.0):
            raise DoseOutsideGrid("treated doses must lie in (0, 1]")

        self.mu_rows = fit.outcome_treated.on_grid(x_t, self.grid)
        self.mu_at = fit.outcome_treated.at_dose(x_t, self.d_t)
        self.mu0_t = fit.outcome_untreated(x_t)
        self.mu0_u = fit.outcome_untreated(x_u)
        self.pi_rows = fit.dose_density.rows(x_t)
        self.pi_at = self.grid.interp_at(self.pi_rows, self.d_t)

        prop_u = fit.binary_propensity(x_u)
        if literal_phi2_weight:
            self.w_u = (1.0 - prop_u) / prop_u
        else:
            self.w_u = prop_u / (1.0 - prop_u)

        # psi2 pieces do not depend on the intervention
        self._phi2_unc_t = self.mu0_t / self.p_hat
        self._phi2_unc_u = self.w_u * (self.dy_u - self.mu0_u) / self.p_hat

    def _assemble(self, fold_id: int, integ: np.ndarray, ratio: np.ndarray,
                  resid: np.ndarray) -> FoldEstimate:
        n = self.n_fold
        phi1_unc_t = (ratio * resid + integ) / self.p_hat
        psi1 = float(phi1_unc_t.sum() / n)
        psi2 = float((self._phi2_unc_t.sum() + self._phi2_unc_u.sum()) / n)
        psi1_plugin = float((integ / self.p_hat).sum() / n)
        psi2_plugin = float((self._phi2_unc_t).sum() / n)
        correction1 = psi1 - psi1_plugin
        correction2 = psi2 - psi2_plugin

        phi = np.zeros(n)
        phi[self.treated_mask] = (
            phi1_unc_t - psi1 / self.p_hat
            - (self._phi2_unc_t - psi2 / self.p_hat)
        )
        phi[~self.treated_mask] = -self._phi2_unc_u
        return FoldEstimate(
            fold_id=fold_id, n_fold=n, p_hat=self.p_hat,
            psi=psi1 - psi2, psi1=psi1, psi2=psi2,
            psi_plugin=psi1_plugin - psi2_plugin,
            psi1_plugin=psi1_plugin, psi2_plugin=psi2_plugin,
            correction1=correction1, correction2=correction2, phi=phi,
        )

    def evaluate_tilt(self, delta: float, fold_id: int = 0) -> FoldEstimate:
        """Exponential-tilt influence values: the residual is the deviation
        of the observed trend from the tilted-average outcome regression."""
        q_rows = tilt_rows(self.pi_rows, self.grid, delta)
        integ = self.grid.integrate(self.mu_rows * q_rows)
        q_at = self.grid.interp_at(q_rows, self.d_t)
        ratio = q_at / self.pi_at
        resid = self.dy_t - integ
        return self._assemble(fold_id, integ, ratio, resid)

    def evaluate_fixed(self, q_values: np.ndarray, fold_id: int = 0) -> FoldEstimate:
        """Data-independent-density influence values: the residual is taken
        at the observed dose."""
        q_values = np.asarray(q_values, dtype=float)
        integ = self.grid.integrate(self.mu_rows * q_values[None, :])
        q_at = np.interp(self.d_t, self.grid.points, q_values)
        ratio = q_at / self.pi_at
        resid = self.dy_t - self.mu_at
        return self._assemble(fold_id, integ, ratio, resid)

    def evaluate(self, spec: InterventionSpec, fold_id: int = 0) -> FoldEstimate:
        if spec.family == "exponential_tilt":
            return self.evaluate_tilt(spec.delta, fold_id)
        if spec.family == "parametric":
            return self.evaluate_fixed(parametric_values(spec, self.grid), fold_id)
        raise UnsupportedInterventionForOneStep(
            f"{spec.family} has no influence-function one-step; use the plug-in path"
        )


# -- plug-in estimators ------------------------------------------------------

def plugin_upt(data: PanelDataset, q: DensityCurve, mu_values: np.ndarray) -> float:
    """Marginal plug-in estimate: integrate the dose-response values
    against q, minus the untreated sample mean of the outcome trend."""
    mu_values = np.asarray(mu_values, dtype=float)
    if mu_values.shape != q.grid.points.shape:
        raise InvalidParameter("mu_values must be evaluated on the same grid as q")
    if data.n_untreated == 0:
        raise NoUntreatedUnits("plug-in needs untreated units")
    trend = float(data.dy[~data.treated].mean())
    return float(q.grid.integrate(mu_values * q.values)) - trend


def plugin_cpt(data: PanelDataset, fit: NuisanceFit, spec: InterventionSpec,
               rows: np.ndarray | None = None) -> float:
    """Covariate-conditional plug-in estimate.

    Builds each treated unit's counterfactual density from the fitted
    dose density, integrates the outcome surface against it, and
    subtracts the treated-averaged untreated trend.
    """
    rows = np.arange(data.n) if rows is None else np.asarray(rows, dtype=int)
    treated = rows[data.treated[rows]]
    if treated.size == 0:
        raise InvalidParameter("no treated units to average over")
    x_t = data.x[treated]
    mu_rows = fit.outcome_treated.on_grid(x_t, fit.grid)
    if spec.data_independent:
        q_rows = np.broadcast_to(parametric_values(spec, fit.grid), mu_rows.shape)
    else:
        q_rows = apply_to_rows(spec, fit.dose_density.rows(x_t), fit.grid)
    psi1 = float(fit.grid.integrate(mu_rows * q_rows).mean())
    psi2 = float(fit.outcome_untreated(x_t).mean())
    return psi1 - psi2


# -- one-step machinery ------------------------------------------------------

def onestep_fold(data: PanelDataset, eval_rows: np.ndarray, fit: NuisanceFit,
                 spec: InterventionSpec, literal_phi2_weight: bool = False) -> FoldEstimate:
    """One fold of the one-step estimator, evaluated on ``eval_rows`` with
    nuisances trained elsewhere. The treated fraction used inside the
    influence values is computed on the evaluation rows."""
    ctx = _FoldContext(data, eval_rows, fit, literal_phi2_weight)
    return ctx.evaluate(spec)


def variance_plugin(eif_values: np.ndarray, n: int, psi_hat: float,
                    ci_level: float = DEFAULT_CI_LEVEL) -> tuple[float, float, tuple[float, float]]:
    """Plug-in variance from centered influence values.

    sigma^2 is the mean of the squared centered values; the interval is
    Wald with normal quantiles. With cross-fitting, passing the pooled
    influence values weights folds by size automatically.
    """
    eif_values = np.asarray(eif_values, dtype=float)
    sigma2 = float(np.mean(eif_values**2))
    se = math.sqrt(sigma2 / n)
    z = float(stats.norm.ppf(0.5 + ci_level / 2.0))
    return sigma2, se, (psi_hat - z * se, psi_hat + z * se)


def _aggregate(data: PanelDataset, folds, fold_estimates, *, ci_level: float,
               seed: int | None, spec_label: str, delta: float | None,
               k_folds: int, diagnostics: Diagnostics, keep_eif: bool) -> EstimateResult:
    n = data.n
    weights = np.array([fe.n_fold / n for fe in fold_estimates])
    psi_hat = float(sum(w * fe.psi for w, fe in zip(weights, fold_estimates)))
    psi1 = float(sum(w * fe.psi1 for w, fe in zip(weights, fold_estimates)))
    psi2 = float(sum(w * fe.psi2 for w, fe in zip(weights, fold_estimates)))

    eif = np.zeros(n)
    for fe, rows in zip(fold_estimates, folds):
        eif[rows] = fe.phi
    sigma2, se, (lo, hi) = variance_plugin(eif, n, psi_hat, ci_level)
    return EstimateResult(
        psi_hat=psi_hat, se=se, ci_low=lo, ci_high=hi, ci_level=ci_level,
        sigma2_hat=sigma2, psi1_hat=psi1, psi2_hat=psi2, n=n, k_folds=k_folds,
        seed=seed, intervention=spec_label, delta=delta,
        per_fold=tuple((fe.fold_id, fe.psi, fe.n_fold) for fe in fold_estimates),
        eif_values=eif if keep_eif else None,
        diagnostics=diagnostics.as_dict(),
    )


def _prepare_folds(data: PanelDataset, k_folds: int, seed: int, grid: DoseGrid,
                   learners: LearnerSet | None, bandwidth,
                   nuisance_override: NuisanceFit | None,
                   literal_phi2_weight: bool):
    assignment = assign_folds(data, k_folds, seed)
    contexts, fold_rows = [], []
    diagnostics = Diagnostics()
    for k in range(k_folds):
        eval_rows = assignment.eval_rows(k)
        try:
            if nuisance_override is not None:
                fit = nuisance_override
            else:
                fit = fit_all(data, assignment.train_rows(k), grid, learners, bandwidth)
            contexts.append(_FoldContext(data, eval_rows, fit, literal_phi2_weight))
        except TiltDidError as exc:
            exc.args = (f"fold {k}: {exc}",) + exc.args[1:]
            raise
        fold_rows.append(eval_rows)
        diagnostics.merge(fit.collect_diagnostics())
        fit.p_hat = contexts[-1].p_hat
    return contexts, fold_rows, diagnostics


def crossfit_onestep_multi(data: PanelDataset, specs, k_folds: int = 5, seed: int = 0,
                           learners: LearnerSet | None = None,
                           grid_size: int = DEFAULT_GRID_SIZE,
                           bandwidth="auto", ci_level: float = DEFAULT_CI_LEVEL,
                           literal_phi2_weight: bool = False,
                           nuisance_override: NuisanceFit | None = None,
                           keep_eif: bool = False) -> list[EstimateResult]:
    """Cross-fitted one-step estimates for several interventions at once.

    Nuisances are fit once per fold and reused across the supplied
    interventions, which makes delta-grid sweeps cheap. Every spec must
    support the one-step (exponential tilt or data-independent
    parametric).
    """
    specs = list(specs)
    for spec in specs:
        if not spec.onestep_supported:
            raise UnsupportedInterventionForOneStep(
                f"{spec.family} has no influence-function one-step; use the plug-in path"
            )
    grid = nuisance_override.grid if nuisance_override is not None else DoseGrid.uniform(grid_size)
    contexts, fold_rows, diagnostics = _prepare_folds(
        data, k_folds, seed, grid, learners, bandwidth, nuisance_override,
        literal_phi2_weight,
    )
    results = []
    for spec in specs:
        fold_estimates = [ctx.evaluate(spec, fold_id=k) for k, ctx in enumerate(contexts)]
        results.append(_aggregate(
            data, fold_rows, fold_estimates, ci_level=ci_level, seed=seed,
            spec_label=spec.label(), delta=spec.delta, k_folds=k_folds,
            diagnostics=diagnostics, keep_eif=keep_eif,
        ))
    return results


def onestep_crossfit(data: PanelDataset, spec: InterventionSpec, k_folds: int = 5,
                     seed: int = 0, learners: LearnerSet | None = None,
                     grid_size: int = DEFAULT_GRID_SIZE, bandwidth="auto",
                     ci_level: float = DEFAULT_CI_LEVEL,
                     literal_phi2_weight: bool = False,
                     nuisance_override: NuisanceFit | None = None,
                     keep_eif: bool = False) -> EstimateResult:
    """Cross-fitted one-step estimate for a single intervention.

    Per fold: nuisances are fit on the complement, the fold estimate is
    computed on the fold, and the final estimate is the fold-size-weighted
    mean with a pooled influence-function variance. Deterministic given
    the seed.
    """
    return crossfit_onestep_multi(
        data, [spec], k_folds=k_folds, seed=seed, learners=learners,
        grid_size=grid_size, bandwidth=bandwidth, ci_level=ci_level,
        literal_phi2_weight=literal_phi2_weight, nuisance_override=nuisance_override,
        keep_eif=keep_eif,
    )[0]


def onestep_parametric(data: PanelDataset, q: DensityCurve, k_folds: int = 5,
                       seed: int = 0, learners: LearnerSet | None = None,
                       bandwidth="auto", ci_level: float = DEFAULT_CI_LEVEL,
                       literal_phi2_weight: bool = False,
                       nuisance_override: NuisanceFit | None = None,
                       keep_eif: bool = False) -> EstimateResult:
    """Cross-fitted one-step for a fixed, data-independent dose density.

    Unlike the tilt case the residual is taken at the observed dose,
    dY - mu(D, x).
    """
    contexts, fold_rows, diagnostics = _prepare_folds(
        data, k_folds, seed, q.grid, learners, bandwidth, nuisance_override,
        literal_phi2_weight,
    )
    fold_estimates = [ctx.evaluate_fixed(q.values, fold_id=k)
                      for k, ctx in enumerate(contexts)]
    return _aggregate(
        data, fold_rows, fold_estimates, ci_level=ci_level, seed=seed,
        spec_label="parametric(fixed-curve)", delta=None, k_folds=k_folds,
        diagnostics=diagnostics, keep_eif=keep_eif,
    )


def plugin_estimate(data: PanelDataset, spec: InterventionSpec,
                    learners: LearnerSet | None = None,
                    grid_size: int = DEFAULT_GRID_SIZE, bandwidth="auto",
                    nuisance_override: NuisanceFit | None = None) -> EstimateResult:
    """Plug-in-only estimate for interventions without a one-step.

    Nuisances are fit on the full sample and no influence-function
    standard error is reported (se and the interval are None).
    """
    if nuisance_override is not None:
        fit = nuisance_override
    else:
        fit = fit_all(data, np.arange(data.n), DoseGrid.uniform(grid_size),
                      learners, bandwidth)
    psi = plugin_cpt(data, fit, spec)
    diagnostics = fit.collect_diagnostics()
    diagnostics.add_flags(("plugin_only_no_se",))
    x_t = data.x[data.treated]
    mu_rows = fit.outcome_treated.on_grid(x_t, fit.grid)
    if spec.data_independent:
        q_rows = np.broadcast_to(parametric_values(spec, fit.grid), mu_rows.shape)
    else:
        q_rows = apply_to_rows(spec, fit.dose_density.rows(x_t), fit.grid)
    psi1 = float(fit.grid.integrate(mu_rows * q_rows).mean())
    return EstimateResult(
        psi_hat=psi, se=None, ci_low=None, ci_high=None, ci_level=DEFAULT_CI_LEVEL,
        sigma2_hat=None, psi1_hat=psi1, psi2_hat=psi1 - psi, n=data.n, k_folds=1,
        seed=None, intervention=spec.label(), delta=spec.delta, per_fold=((0, psi, data.n),),
        diagnostics=diagnostics.as_dict(),
    )
