import numpy as np
import pytest

from tiltdid import (
    DoseGrid,
    InterventionSpec,
    PanelDataset,
    ScenarioSpec,
    assign_folds,
    onestep_crossfit,
    onestep_fold,
    onestep_parametric,
    oracle_nuisance_fit,
    oracle_truth,
    plugin_cpt,
    plugin_estimate,
    plugin_upt,
    simulate_scenario,
    variance_plugin,
)
from tiltdid.errors import InvalidParameter, UnsupportedInterventionForOneStep
from tiltdid.estimators import crossfit_onestep_multi
from tiltdid.interventions import gaussian_kernel_density, parametric_density, tilt_density
from tiltdid.nuisance import fit_all
from tiltdid.simulation import GAMMA_TREATED, GAMMA_UNTREATED, derive_seed

GRID = DoseGrid.uniform(101)
UNIFORM = parametric_density(InterventionSpec.uniform(), GRID)


def doseless_data(n=400, p=2, seed=0, noise=0.0):
    """Outcome depends on covariates only, not the dose: with exact linear
    fits every residual is zero, so one-step corrections vanish."""
    rng = np.random.default_rng(seed)
    x = rng.random((n, p))
    treated = rng.random(n) < 0.6
    treated[0], treated[1] = True, False
    d = np.clip(rng.beta(2, 2, n), 1e-6, 1.0)
    a = np.where(treated, d, 0.0)
    beta_t = np.arange(1, p + 1, dtype=float)
    beta_u = beta_t[::-1].copy()
    dy = np.where(treated, x @ beta_t, x @ beta_u)
    dy = dy + noise * rng.standard_normal(n)
    return PanelDataset(y0=np.zeros(n), y1=dy, a=a, x=x)


def marginal_dose_data(n=2000, seed=0):
    """No covariates; dY = 0.5 D among treated and exactly 0 among untreated."""
    rng = np.random.default_rng(seed)
    treated = rng.random(n) < 0.6
    treated[0], treated[1] = True, False
    d = np.clip(rng.beta(2, 2, n), 1e-6, 1.0)
    a = np.where(treated, d, 0.0)
    dy = np.where(treated, 0.5 * d, 0.0)
    return PanelDataset(y0=np.zeros(n), y1=dy, a=a, x=np.empty((n, 0)))


# -- plug-in -----------------------------------------------------------------

def test_plugin_upt_constant_outcome():
    data = marginal_dose_data()
    q = tilt_density(UNIFORM, 1.7)
    c = 4.2
    expected = c - data.dy[~data.treated].mean()
    assert plugin_upt(data, q, np.full(GRID.size, c)) == pytest.approx(expected, abs=1e-12)


def test_plugin_upt_point_mass_recovers_fixed_dose_effect():
    data = marginal_dose_data(seed=3)
    fit = fit_all(data, np.arange(data.n), GRID)
    mu_values = fit.outcome_treated.on_grid(np.empty((1, 0)), GRID)[0]
    q = gaussian_kernel_density(UNIFORM, delta=0.01, d_prime=0.5)
    assert plugin_upt(data, q, mu_values) == pytest.approx(0.25, abs=2e-3)


def test_plugin_upt_uniform_q_closed_form():
    data = marginal_dose_data(seed=4)
    assert plugin_upt(data, UNIFORM, 0.5 * GRID.points) == pytest.approx(0.25, abs=1e-4)


def test_plugin_upt_grid_mismatch():
    data = marginal_dose_data()
    with pytest.raises(InvalidParameter):
        plugin_upt(data, UNIFORM, np.ones(11))


def test_plugin_cpt_collapses_to_upt_without_covariates():
    data = marginal_dose_data(seed=5)
    fit = fit_all(data, np.arange(data.n), GRID)
    spec = InterventionSpec.tilt(1.5)
    marginal_pi = fit.dose_density.rows(np.empty((1, 0)))[0]
    from tiltdid.interventions import DensityCurve

    q = tilt_density(DensityCurve(GRID, marginal_pi), 1.5)
    mu_values = fit.outcome_treated.on_grid(np.empty((1, 0)), GRID)[0]
    assert plugin_cpt(data, fit, spec) == pytest.approx(
        plugin_upt(data, q, mu_values), abs=1e-10)


def test_plugin_cpt_oracle_identity_at_zero_tilt():
    # symmetric dose density and equal trend coefficients make the plug-in
    # equal 0.5 * 0.5 exactly, replicate by replicate
    oracle = oracle_nuisance_fit(1, GRID)
    values = []
    for seed in range(200):
        data = simulate_scenario(ScenarioSpec(1, 400, seed=seed))
        values.append(plugin_cpt(data, oracle, InterventionSpec.tilt(0.0)))
    values = np.array(values)
    assert np.abs(values - 0.25).max() < 1e-10


def test_plugin_cpt_component_reduction():
    oracle = oracle_nuisance_fit(1, GRID)
    data = simulate_scenario(ScenarioSpec(1, 1500, seed=8))
    x_t = data.x[data.treated]
    psi2_expected = float((x_t @ GAMMA_UNTREATED).mean())
    psi1 = plugin_cpt(data, oracle, InterventionSpec.tilt(0.0)) + psi2_expected
    assert psi1 == pytest.approx(0.25 + float((x_t @ GAMMA_TREATED).mean()), abs=1e-10)


# -- one-step fold mechanics ---------------------------------------------------

def test_onestep_corrections_vanish_with_exact_nuisances():
    data = doseless_data(noise=0.0)
    fit = fit_all(data, np.arange(data.n), GRID)
    folds = assign_folds(data, 2, seed=1)
    for delta in (0.0, 2.0):
        fe = onestep_fold(data, folds.eval_rows(0), fit, InterventionSpec.tilt(delta))
        assert fe.correction1 == pytest.approx(0.0, abs=1e-10)
        assert fe.correction2 == pytest.approx(0.0, abs=1e-10)
        assert fe.psi == pytest.approx(fe.psi_plugin, abs=1e-10)


def test_onestep_construction_identity_noisy_data():
    data = doseless_data(noise=1.0, seed=9)
    fit = fit_all(data, np.arange(data.n), GRID)
    folds = assign_folds(data, 3, seed=2)
    fe = onestep_fold(data, folds.eval_rows(1), fit, InterventionSpec.tilt(1.0))
    assert fe.psi == pytest.approx(fe.psi_plugin + fe.correction1 - fe.correction2, abs=1e-10)
    assert abs(fe.phi.mean()) < 1e-12


def test_onestep_fold_rejects_unsupported_family():
    data = doseless_data()
    fit = fit_all(data, np.arange(data.n), GRID)
    folds = assign_folds(data, 2, seed=1)
    with pytest.raises(UnsupportedInterventionForOneStep):
        onestep_fold(data, folds.eval_rows(0), fit, InterventionSpec.minimum_dose(0.3))


# -- cross-fitting -------------------------------------------------------------

def test_crossfit_deterministic():
    data = simulate_scenario(ScenarioSpec(1, 600, seed=21))
    a = onestep_crossfit(data, InterventionSpec.tilt(1.0), k_folds=4, seed=5, keep_eif=True)
    b = onestep_crossfit(data, InterventionSpec.tilt(1.0), k_folds=4, seed=5, keep_eif=True)
    assert a.psi_hat == b.psi_hat
    assert a.se == b.se
    assert a.per_fold == b.per_fold
    assert np.array_equal(a.eif_values, b.eif_values)


def test_crossfit_aggregation_identity():
    data = simulate_scenario(ScenarioSpec(1, 600, seed=22))
    res = onestep_crossfit(data, InterventionSpec.tilt(0.5), k_folds=4, seed=6)
    total = sum(size * psi for _, psi, size in res.per_fold) / res.n
    assert res.psi_hat == pytest.approx(total, abs=1e-15)
    assert sum(size for _, _, size in res.per_fold) == res.n


def test_crossfit_eif_mean_zero():
    data = simulate_scenario(ScenarioSpec(1, 600, seed=23))
    res = onestep_crossfit(data, InterventionSpec.tilt(2.0), k_folds=3, seed=7, keep_eif=True)
    assert abs(res.eif_values.mean()) < 1e-8
    assert res.sigma2_hat == pytest.approx(float((res.eif_values**2).mean()), abs=1e-12)


def test_crossfit_fold_count_stability():
    data = simulate_scenario(ScenarioSpec(1, 2000, seed=24))
    r2 = onestep_crossfit(data, InterventionSpec.tilt(1.0), k_folds=2, seed=8)
    r5 = onestep_crossfit(data, InterventionSpec.tilt(1.0), k_folds=5, seed=8)
    assert abs(r2.psi_hat - r5.psi_hat) < 3 * max(r2.se, r5.se)


def test_crossfit_extreme_negative_tilt_tracks_oracle():
    truth, _ = oracle_truth(1, InterventionSpec.tilt(-10.0), n_mc=200_000, seed=31)
    data = simulate_scenario(ScenarioSpec(1, 4000, seed=31))
    res = onestep_crossfit(data, InterventionSpec.tilt(-10.0), k_folds=5, seed=31)
    assert abs(res.psi_hat - truth) < 3 * res.se


def test_crossfit_rejects_data_dependent_non_tilt():
    data = simulate_scenario(ScenarioSpec(1, 600, seed=25))
    for spec in (InterventionSpec.gaussian(0.1, 0.5), InterventionSpec.minimum_dose(0.2),
                 InterventionSpec.shift(0.1, 0.2)):
        with pytest.raises(UnsupportedInterventionForOneStep):
            onestep_crossfit(data, spec, k_folds=2, seed=1)


def test_tilt_limits_monotone_and_tracked():
    deltas = [-50.0, -5.0, 0.0, 5.0, 50.0]
    truths = [oracle_truth(1, InterventionSpec.tilt(d), n_mc=150_000, seed=40)[0]
              for d in deltas]
    assert np.all(np.diff(truths) > 0)
    data = simulate_scenario(ScenarioSpec(1, 4000, seed=41))
    oracle = oracle_nuisance_fit(1, GRID)
    results = crossfit_onestep_multi(data, [InterventionSpec.tilt(d) for d in deltas],
                                     k_folds=5, seed=41, nuisance_override=oracle)
    for truth, res in zip(truths, results):
        assert abs(res.psi_hat - truth) < 3 * res.se


def test_root_n_concentration_with_oracle_nuisances():
    # |psi_hat - truth| <= 3 sigma_hat / sqrt(n) in at least 95% of replicates
    oracle = oracle_nuisance_fit(1, GRID)
    spec = InterventionSpec.tilt(1.0)
    truth, _ = oracle_truth(1, spec, n_mc=400_000, seed=50)
    hits = 0
    reps = 300
    for rep in range(reps):
        data = simulate_scenario(ScenarioSpec(1, 2000, seed=derive_seed(50, rep)))
        fe = onestep_fold(data, np.arange(data.n), oracle, spec)
        sigma = float(np.sqrt((fe.phi**2).mean()))
        if abs(fe.psi - truth) <= 3 * sigma / np.sqrt(data.n):
            hits += 1
    assert hits / reps >= 0.95


# -- parametric one-step -------------------------------------------------------

def test_onestep_parametric_exact_case():
    # even strata so the fold-weighted aggregate equals the overall treated mean
    rng = np.random.default_rng(12)
    n = 400
    treated = np.arange(n) < 300
    d = np.clip(rng.beta(2, 2, n), 1e-6, 1.0)
    a = np.where(treated, d, 0.0)
    x = rng.random((n, 2))
    dy = np.where(treated, x @ np.array([1.0, 2.0]), x @ np.array([2.0, 1.0]))
    data = PanelDataset(y0=np.zeros(n), y1=dy, a=a, x=x)
    fit = fit_all(data, np.arange(n), GRID)
    res = onestep_parametric(data, UNIFORM, k_folds=2, seed=3, nuisance_override=fit)
    x_t = data.x[data.treated]
    mu_rows = fit.outcome_treated.on_grid(x_t, GRID)
    expected = float(GRID.integrate(mu_rows).mean() - fit.outcome_untreated(x_t).mean())
    assert res.psi_hat == pytest.approx(expected, abs=1e-10)


def test_onestep_parametric_uniform_oracle_mean():
    spec = InterventionSpec.uniform()
    truth, truth_se = oracle_truth(1, spec, n_mc=400_000, seed=60)
    assert truth == pytest.approx(0.25, abs=3 * truth_se + 1e-4)
    estimates = []
    reps = 300
    for rep in range(reps):
        data = simulate_scenario(ScenarioSpec(1, 2000, seed=derive_seed(60, rep, 0)))
        res = onestep_parametric(data, UNIFORM, k_folds=5, seed=derive_seed(60, rep, 1))
        estimates.append(res.psi_hat)
    estimates = np.array(estimates)
    mc_se = estimates.std(ddof=1) / np.sqrt(reps)
    assert abs(estimates.mean() - truth) <= 2 * mc_se


def test_onestep_parametric_agrees_with_zero_tilt():
    data = simulate_scenario(ScenarioSpec(1, 3000, seed=61))
    fit = fit_all(data, np.arange(data.n), GRID)
    marginal = fit.dose_density.rows(data.x[data.treated]).mean(axis=0)
    from tiltdid.interventions import DensityCurve

    q = DensityCurve.from_values(GRID, marginal)
    res_fixed = onestep_parametric(data, q, k_folds=5, seed=62)
    res_tilt = onestep_crossfit(data, InterventionSpec.tilt(0.0), k_folds=5, seed=62)
    assert abs(res_fixed.psi_hat - res_tilt.psi_hat) < 3 * max(res_fixed.se, res_tilt.se)


# -- variance ------------------------------------------------------------------

def test_variance_plugin_zero_values():
    sigma2, se, (lo, hi) = variance_plugin(np.zeros(50), 50, psi_hat=1.0)
    assert sigma2 == 0.0
    assert se == 0.0
    assert lo == hi == 1.0


def test_variance_plugin_alternating_unit_values():
    values = np.resize([1.0, -1.0], 100)
    sigma2, se, (lo, hi) = variance_plugin(values, 100, psi_hat=0.0)
    assert sigma2 == pytest.approx(1.0)
    assert se == pytest.approx(0.1)
    assert lo == pytest.approx(-se * 1.959963984540054, abs=1e-9)
    assert hi == pytest.approx(+se * 1.959963984540054, abs=1e-9)


# -- plug-in only path ---------------------------------------------------------

def test_plugin_estimate_reports_no_se():
    data = simulate_scenario(ScenarioSpec(1, 600, seed=70))
    res = plugin_estimate(data, InterventionSpec.gaussian(0.05, 0.5))
    assert res.se is None and res.ci_low is None
    assert "plugin_only_no_se" in res.diagnostics["flags"]
    assert np.isfinite(res.psi_hat)


def test_estimate_result_serializes():
    data = simulate_scenario(ScenarioSpec(1, 600, seed=71))
    res = onestep_crossfit(data, InterventionSpec.tilt(1.0), k_folds=2, seed=9)
    payload = res.to_dict()
    assert payload["psi_hat"] == res.psi_hat
    assert payload["delta"] == 1.0
    assert isinstance(payload["per_fold"], list)
    import json

    json.dumps(payload)
