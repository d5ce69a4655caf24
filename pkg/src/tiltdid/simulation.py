"""Synthetic data-generating processes, Monte Carlo oracle truths, and
bias/coverage studies.

Two scenarios share the covariate, treatment-probability, and outcome
laws and differ only in the conditional Beta dose distribution:

    X = (X_1, ..., X_10) iid Uniform(0, 1)
    P(A > 0 | X) = 0.7 + sum_j (-0.12 + 0.02 j) X_j
    D | X ~ Beta(exp(X lam1), exp(X lam2))
    dY | A, X ~ Normal(mu(A, X), 1)
    mu(A, X) = 1(A = 0) X gam1 + 1(A > 0)(0.5 D + X gam2)

Scenario 1 uses lam1 = lam2 (a symmetric dose density); Scenario 2 skews
the dose density toward small doses, so large positive tilts extrapolate
into sparse-data regions. Coefficient vectors are 10 equally spaced
values inclusive of both endpoints.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import PanelDataset
from .errors import InvalidParameter
from .estimators import crossfit_onestep_multi
from .grid import DoseGrid
from .interventions import InterventionSpec, apply_to_rows
from .nuisance import (
    BinaryPropensity,
    DoseDensity,
    FunctionOutcomeSurface,
    MeanPredictor,
    NuisanceFit,
)

PROPENSITY_INTERCEPT = 0.7
PROPENSITY_COEFS = -0.12 + 0.02 * np.arange(1, 11)
GAMMA_UNTREATED = np.linspace(-2.0, 2.0, 10)
GAMMA_TREATED = np.linspace(-2.0, 2.0, 10)
LAMBDA_1 = {1: np.linspace(-0.2, 0.2, 10), 2: np.linspace(-0.1, 0.5, 10)}
LAMBDA_2 = {1: np.linspace(-0.2, 0.2, 10), 2: np.linspace(0.3, 0.7, 10)}
DOSE_SLOPE = 0.5
N_COVARIATES = 10

MIN_REPLICATES = 50
MIN_ORACLE_DRAWS = 100_000
ORACLE_CHUNK = 20_000


def derive_seed(master: int, *path: int) -> int:
    """Deterministic child seed for (master, path) without stream overlap."""
    ss = np.random.SeedSequence(entropy=master, spawn_key=tuple(path))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ScenarioSpec:
    """One synthetic dataset request: scenario family, size, seed."""

    scenario: int
    n: int
    seed: int

    def __post_init__(self):
        if self.scenario not in (1, 2):
            raise InvalidParameter(f"scenario must be 1 or 2, got {self.scenario}")
        if self.n < 100:
            raise InvalidParameter(f"scenario sample size must be >= 100, got {self.n}")


def true_propensity(x: np.ndarray) -> np.ndarray:
    return PROPENSITY_INTERCEPT + np.asarray(x, dtype=float) @ PROPENSITY_COEFS


def beta_parameters(x: np.ndarray, scenario: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    return np.exp(x @ LAMBDA_1[scenario]), np.exp(x @ LAMBDA_2[scenario])


def treated_outcome_mean(d: np.ndarray, x: np.ndarray) -> np.ndarray:
    return DOSE_SLOPE * np.asarray(d, dtype=float) + np.asarray(x, dtype=float) @ GAMMA_TREATED


def untreated_outcome_mean(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=float) @ GAMMA_UNTREATED


def simulate_scenario(spec: ScenarioSpec) -> PanelDataset:
    """Draw one dataset. Only the outcome trend is materialized: y0 is 0
    and y1 carries dY, which is observationally equivalent for every
    estimator in this package."""
    rng = np.random.default_rng(spec.seed)
    x = rng.random((spec.n, N_COVARIATES))
    p_treat = true_propensity(x)
    treated = rng.random(spec.n) < p_treat
    alpha, beta_ = beta_parameters(x, spec.scenario)
    doses = rng.beta(alpha, beta_)
    doses = np.clip(doses, 1e-12, 1.0)  # the point mass at 0 comes only from the A>0 draw
    a = np.where(treated, doses, 0.0)
    mean = np.where(treated, treated_outcome_mean(doses, x), untreated_outcome_mean(x))
    dy = mean + rng.standard_normal(spec.n)
    return PanelDataset(y0=np.zeros(spec.n), y1=dy, a=a, x=x)


def oracle_nuisance_fit(scenario: int, grid: DoseGrid, mu0_shift: float = 0.0) -> NuisanceFit:
    """Nuisance bundle built from the closed-form truth of the generating
    process. ``mu0_shift`` adds a constant corruption to the untreated
    trend, used to probe the debiasing direction of the untreated
    correction term."""

    def density_fn(points: np.ndarray, x: np.ndarray) -> np.ndarray:
        alpha, beta_ = beta_parameters(x, scenario)
        return stats.beta.pdf(points[None, :], alpha[:, None], beta_[:, None])

    return NuisanceFit(
        outcome_treated=FunctionOutcomeSurface(treated_outcome_mean),
        outcome_untreated=MeanPredictor(fn=lambda x: untreated_outcome_mean(x) + mu0_shift),
        binary_propensity=BinaryPropensity(fn=true_propensity),
        dose_density=DoseDensity(grid=grid, fn=density_fn),
        grid=grid,
    )


def _oracle_chunks(scenario: int, n_mc: int, seed: int, grid: DoseGrid):
    """Yield (density_rows, x) for treated covariate draws, in chunks.

    Treated draws are kept by rejection on the true treatment
    probability; densities go through the same floor/renormalize path as
    fitted ones so truth and estimator share one integration convention.
    """
    from .nuisance import floor_and_normalize

    rng = np.random.default_rng(seed)
    remaining = n_mc
    while remaining > 0:
        chunk = min(ORACLE_CHUNK, remaining)
        remaining -= chunk
        x = rng.random((chunk, N_COVARIATES))
        keep = rng.random(chunk) < true_propensity(x)
        x = x[keep]
        if x.shape[0] == 0:
            continue
        alpha, beta_ = beta_parameters(x, scenario)
        raw = stats.beta.pdf(grid.points[None, :], alpha[:, None], beta_[:, None])
        rows, _ = floor_and_normalize(raw, grid)
        yield rows, x


def oracle_truth(scenario: int, spec: InterventionSpec, n_mc: int = 400_000,
                 seed: int = 0, grid_size: int = 101) -> tuple[float, float]:
    """Monte Carlo value of the estimand for one intervention.

    Averages E_q[0.5 D | X] plus the treated/untreated trend gap over
    treated covariate draws; returns (truth, Monte Carlo standard error).
    """
    if n_mc < MIN_ORACLE_DRAWS:
        raise InvalidParameter(f"oracle needs at least {MIN_ORACLE_DRAWS} draws")
    grid = DoseGrid.uniform(grid_size)
    total = 0.0
    total_sq = 0.0
    count = 0
    for rows, x in _oracle_chunks(scenario, n_mc, seed, grid):
        q_rows = apply_to_rows(spec, rows, grid)
        vals = DOSE_SLOPE * (q_rows @ (grid.points * grid.weights))
        vals = vals + x @ (GAMMA_TREATED - GAMMA_UNTREATED)
        total += vals.sum()
        total_sq += (vals**2).sum()
        count += vals.size
    mean = total / count
    var = max(total_sq / count - mean**2, 0.0)
    return float(mean), float(np.sqrt(var / count))


def oracle_truth_tilt_grid(scenario: int, deltas, n_mc: int = 400_000, seed: int = 0,
                           grid_size: int = 101) -> dict[float, tuple[float, float]]:
    """Oracle truths for a whole tilt grid from one set of draws."""
    if n_mc < MIN_ORACLE_DRAWS:
        raise InvalidParameter(f"oracle needs at least {MIN_ORACLE_DRAWS} draws")
    deltas = [float(d) for d in deltas]
    grid = DoseGrid.uniform(grid_size)
    factors = {d: np.exp(d * (grid.points - grid.points.max())) for d in deltas}
    moment = grid.points * grid.weights
    totals = {d: [0.0, 0.0] for d in deltas}
    count = 0
    for rows, x in _oracle_chunks(scenario, n_mc, seed, grid):
        gap = x @ (GAMMA_TREATED - GAMMA_UNTREATED)
        for d in deltas:
            tilted = rows * factors[d][None, :]
            tilted /= (tilted @ grid.weights)[:, None]
            vals = DOSE_SLOPE * (tilted @ moment) + gap
            totals[d][0] += vals.sum()
            totals[d][1] += (vals**2).sum()
        count += rows.shape[0]
    out = {}
    for d in deltas:
        mean = totals[d][0] / count
        var = max(totals[d][1] / count - mean**2, 0.0)
        out[d] = (float(mean), float(np.sqrt(var / count)))
    return out


@dataclass(frozen=True)
class StudyRow:
    """Aggregate performance at one tilt increment."""

    delta: float
    truth: float
    truth_se: float
    mean_psi: float
    bias: float
    sd_psi: float
    mc_se: float
    coverage: float
    mean_sigma2: float
    mean_se: float


@dataclass(frozen=True)
class StudyResult:
    """Bias/coverage study output.

    ``draws`` holds per-replicate rows (replicate, delta, psi, ci_low,
    ci_high) for plot-style output. Wall-clock runtime stays in memory
    only; serialized outputs must be byte-stable across identical runs.
    """

    scenario: int
    n: int
    replicates: int
    k_folds: int
    seed: int
    rows: tuple[StudyRow, ...]
    runtime_seconds: float
    draws: tuple[tuple[int, float, float, float, float], ...] = field(default=())

    def row_for(self, delta: float) -> StudyRow:
        for row in self.rows:
            if row.delta == delta:
                return row
        raise KeyError(f"no study row for delta={delta}")

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "n": self.n,
            "replicates": self.replicates,
            "k_folds": self.k_folds,
            "seed": self.seed,
            "rows": [vars(r) for r in self.rows],
        }


def _replicate_worker(args):
    (scenario, n, k_folds, master_seed, rep, deltas, grid_size, bandwidth,
     ci_level, literal_weight, nuisance_mode, mu0_shift) = args
    data = simulate_scenario(ScenarioSpec(scenario=scenario, n=n,
                                          seed=derive_seed(master_seed, rep, 0)))
    override = None
    if nuisance_mode == "oracle":
        override = oracle_nuisance_fit(scenario, DoseGrid.uniform(grid_size),
                                       mu0_shift=mu0_shift)
    results = crossfit_onestep_multi(
        data, [InterventionSpec.tilt(d) for d in deltas], k_folds=k_folds,
        seed=derive_seed(master_seed, rep, 1), grid_size=grid_size,
        bandwidth=bandwidth, ci_level=ci_level, literal_phi2_weight=literal_weight,
        nuisance_override=override,
    )
    return rep, [(r.psi_hat, r.se, r.ci_low, r.ci_high, r.sigma2_hat) for r in results]


def resolve_threads(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("TILTDID_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_study(scenario: int, deltas, n: int, replicates: int, k_folds: int = 5,
              seed: int = 0, grid_size: int = 101, bandwidth="auto",
              ci_level: float = 0.95, literal_phi2_weight: bool = False,
              nuisance: str = "fitted", mu0_shift: float = 0.0,
              oracle_draws: int = 400_000, threads: int | None = None,
              keep_draws: bool = False) -> StudyResult:
    """Monte Carlo bias/coverage study over a tilt grid.

    Each replicate simulates a dataset from (seed, replicate) and runs the
    cross-fitted one-step at every delta; truths come from the Monte Carlo
    oracle. Replicates are embarrassingly parallel with per-replicate
    derived seeds, and the aggregation is a sum, so results do not depend
    on the worker count. ``nuisance="oracle"`` injects the closed-form
    truth (optionally with a corrupted untreated trend) instead of
    fitting.
    """
    if replicates < MIN_REPLICATES:
        raise InvalidParameter(f"need at least {MIN_REPLICATES} replicates, got {replicates}")
    if nuisance not in ("fitted", "oracle"):
        raise InvalidParameter("nuisance must be 'fitted' or 'oracle'")
    deltas = [float(d) for d in deltas]
    start = time.perf_counter()
    truths = oracle_truth_tilt_grid(scenario, deltas, n_mc=oracle_draws,
                                    seed=derive_seed(seed, 999_983), grid_size=grid_size)

    args = [(scenario, n, k_folds, seed, rep, deltas, grid_size, bandwidth,
             ci_level, literal_phi2_weight, nuisance, mu0_shift)
            for rep in range(replicates)]
    workers = resolve_threads(threads)
    if workers > 1 and replicates > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_replicate_worker, args,
                                chunksize=max(1, replicates // (workers * 4))))
    else:
        raw = [_replicate_worker(a) for a in args]
    raw.sort(key=lambda item: item[0])

    psi = np.array([[row[0] for row in rows] for _, rows in raw])
    se = np.array([[row[1] for row in rows] for _, rows in raw])
    lo = np.array([[row[2] for row in rows] for _, rows in raw])
    hi = np.array([[row[3] for row in rows] for _, rows in raw])
    sigma2 = np.array([[row[4] for row in rows] for _, rows in raw])

    rows_out = []
    for j, d in enumerate(deltas):
        truth, truth_se = truths[d]
        mean_psi = float(psi[:, j].mean())
        sd_psi = float(psi[:, j].std(ddof=1))
        rows_out.append(StudyRow(
            delta=d, truth=truth, truth_se=truth_se, mean_psi=mean_psi,
            bias=mean_psi - truth, sd_psi=sd_psi,
            mc_se=sd_psi / np.sqrt(replicates),
            coverage=float(((lo[:, j] <= truth) & (truth <= hi[:, j])).mean()),
            mean_sigma2=float(sigma2[:, j].mean()), mean_se=float(se[:, j].mean()),
        ))
    draws = ()
    if keep_draws:
        draws = tuple(
            (rep, deltas[j], float(psi[rep, j]), float(lo[rep, j]), float(hi[rep, j]))
            for rep in range(replicates) for j in range(len(deltas))
        )
    return StudyResult(scenario=scenario, n=n, replicates=replicates, k_folds=k_folds,
                       seed=seed, rows=tuple(rows_out),
                       runtime_seconds=time.perf_counter() - start, draws=draws)
