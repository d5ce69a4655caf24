"""Average stochastic dose effects among the treated for two-period
difference-in-differences with a continuous dose."""

from .data import FoldAssignment, PanelDataset, assign_folds, load_csv, write_csv
from .errors import TiltDidError
from .estimators import (
    EstimateResult,
    FoldEstimate,
    crossfit_onestep_multi,
    onestep_crossfit,
    onestep_fold,
    onestep_parametric,
    plugin_cpt,
    plugin_estimate,
    plugin_upt,
    variance_plugin,
)
from .grid import DoseGrid, integrate_over_dose
from .interventions import (
    DensityCurve,
    InterventionSpec,
    gaussian_kernel_density,
    minimum_dose_density,
    parametric_density,
    tilt_density,
)
from .learners import LearnerSet, LearnerSpec
from .nuisance import (
    NuisanceFit,
    fit_binary_propensity,
    fit_dose_density,
    fit_outcome_treated,
    fit_outcome_untreated,
)
from .simulation import (
    ScenarioSpec,
    StudyResult,
    oracle_nuisance_fit,
    oracle_truth,
    run_study,
    simulate_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "DensityCurve",
    "DoseGrid",
    "EstimateResult",
    "FoldAssignment",
    "FoldEstimate",
    "InterventionSpec",
    "LearnerSet",
    "LearnerSpec",
    "NuisanceFit",
    "PanelDataset",
    "ScenarioSpec",
    "StudyResult",
    "TiltDidError",
    "assign_folds",
    "crossfit_onestep_multi",
    "fit_binary_propensity",
    "fit_dose_density",
    "fit_outcome_treated",
    "fit_outcome_untreated",
    "gaussian_kernel_density",
    "integrate_over_dose",
    "load_csv",
    "minimum_dose_density",
    "onestep_crossfit",
    "onestep_fold",
    "onestep_parametric",
    "oracle_nuisance_fit",
    "oracle_truth",
    "parametric_density",
    "plugin_cpt",
    "plugin_estimate",
    "plugin_upt",
    "run_study",
    "simulate_scenario",
    "tilt_density",
    "variance_plugin",
    "write_csv",
]
