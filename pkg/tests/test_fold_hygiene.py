"""Training fits must never read evaluation-fold rows."""

import numpy as np

import tiltdid.estimators as estimators
from tiltdid import InterventionSpec, ScenarioSpec, onestep_crossfit, simulate_scenario
from tiltdid.nuisance import fit_outcome_treated


class RecordingArray(np.ndarray):
    """ndarray that logs every integer-array gather against it."""

    def __new__(cls, arr, log):
        obj = np.asarray(arr).view(cls)
        obj._log = log
        return obj

    def __array_finalize__(self, obj):
        self._log = getattr(obj, "_log", None)

    def __getitem__(self, idx):
        if self._log is not None:
            if isinstance(idx, (list, np.ndarray)) and np.asarray(idx).dtype != bool:
                self._log.append(np.asarray(idx).ravel())
        return super().__getitem__(idx)


class SpyData:
    """Duck-typed stand-in for PanelDataset with instrumented row access."""

    def __init__(self, data, log):
        self.a = RecordingArray(data.a, log)
        self.x = RecordingArray(data.x, log)
        self.dy = RecordingArray(data.dy, log)
        self.treated = RecordingArray(data.treated, log)
        self.n_covariates = data.n_covariates
        self.n = data.n


def test_fit_reads_only_requested_rows():
    data = simulate_scenario(ScenarioSpec(1, 400, seed=2))
    train_rows = np.flatnonzero(data.treated)[:150]
    log = []
    fit_outcome_treated(SpyData(data, log), train_rows)
    assert log, "instrumentation captured no row access"
    touched = np.unique(np.concatenate(log))
    assert set(touched) <= set(train_rows)


def test_crossfit_trains_on_fold_complements(monkeypatch):
    data = simulate_scenario(ScenarioSpec(1, 500, seed=3))
    calls = []
    real_fit_all = estimators.fit_all

    def spy_fit_all(dataset, rows, *args, **kwargs):
        calls.append(np.asarray(rows))
        return real_fit_all(dataset, rows, *args, **kwargs)

    monkeypatch.setattr(estimators, "fit_all", spy_fit_all)
    result = onestep_crossfit(data, InterventionSpec.tilt(1.0), k_folds=4, seed=11)
    assert len(calls) == 4
    from tiltdid import assign_folds

    folds = assign_folds(data, 4, seed=11)
    for k, trained_on in enumerate(calls):
        eval_rows = set(folds.eval_rows(k))
        assert eval_rows.isdisjoint(set(trained_on))
        assert set(trained_on) | eval_rows == set(range(data.n))
    assert np.isfinite(result.psi_hat)
