from __future__ import annotations

import numpy as np
import pytest

from hybridtel import learn
from hybridtel.errors import DynamicScenarioRejected, FoldTooSmall, SingleClassData, UntrainedModel
from hybridtel.synth import generate_scenario, preset, throttle_runs
from hybridtel.telemetry import ScenarioMeta


def _separable(n=200, seed=0):
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.uniform(-3, -0.5, n // 2), rng.uniform(0.5, 3, n // 2)])
    X = np.column_stack([x, rng.normal(size=n), rng.normal(size=n), rng.normal(size=n), rng.normal(size=n)])
    return X, (x > 0).astype(int)


def _leaf(k: int, n_classes: int = 4) -> learn.Tree:
    return learn.Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                      np.eye(n_classes)[[k]], np.array([0.0]), 0)


def test_build_dataset_shapes():
    runs = []
    for pc in ("BatteryOnly", "Hybrid"):
        meta = ScenarioMeta(f"s-{pc}", pc, "P25", duration_s=100 / 8.25 + 1e-9)
        runs.append((generate_scenario(meta, seed=1)[0], meta))
    X, y = learn.build_dataset(runs)
    assert X.shape == (200, len(learn.FEATURES))
    assert np.all(X[100:, 4] == 1) and np.all(X[:100, 4] == 0)
    assert np.allclose(X[:, 3], X[:, 0] * X[:, 1])
    assert np.all(y == 0)
    drive = preset("drive-noload")
    with pytest.raises(DynamicScenarioRejected):
        learn.build_dataset([(generate_scenario(drive, seed=0)[0][:10], drive)])


def test_feature_row_power():
    row = learn.FeatureRow(7.0, 2.0, 25.0, 1)
    assert row.power == 14.0
    assert row.as_array().tolist() == [7.0, 2.0, 25.0, 14.0, 1.0]


@pytest.mark.parametrize("kind", ["rf", "gb"])
def test_separable_data_is_learned(kind):
    X, y = _separable()
    params = learn.RFParams() if kind == "rf" else learn.GBParams(n_estimators=10)
    model = learn.train(kind, X, y, params)
    assert np.mean(learn.predict_classes(model, X) == y) == 1.0


def test_same_seed_same_predictions():
    X, y = _separable()
    grid = np.random.default_rng(9).normal(size=(300, 5))
    a = learn.train_rf(X, y, learn.RFParams(n_estimators=10, seed=4))
    b = learn.train_rf(X, y, learn.RFParams(n_estimators=10, seed=4))
    assert np.array_equal(learn.predict_proba(a, grid), learn.predict_proba(b, grid))
    assert learn.model_to_json(a) == learn.model_to_json(b)


def test_learning_rate_zero_predicts_prior():
    X, y = _separable()
    y = np.where(np.arange(len(y)) % 5 == 0, 1, 0)  # class 0 dominates
    model = learn.train_gb(X, y, learn.GBParams(n_estimators=5, learning_rate=0.0))
    assert np.all(learn.predict_classes(model, X) == 0)


def test_unanimous_and_tied_votes():
    params = learn.RFParams(n_estimators=4)
    agree = learn.ForestModel(params, 4, 5, 3, [_leaf(2)] * 4, [0, 1, 2, 3])
    cls, proba = learn.predict(agree, np.zeros(5))
    assert cls == 2 and proba[2] == 1.0
    tied = learn.ForestModel(params, 4, 5, 3, [_leaf(3), _leaf(1), _leaf(3), _leaf(1)], [0, 1, 2, 3])
    cls, proba = learn.predict(tied, np.zeros(5))
    assert cls == 1 and proba[1] == proba[3] == 0.5


def test_training_errors():
    X, y = _separable()
    with pytest.raises(SingleClassData):
        learn.train_rf(X, np.zeros(len(y), dtype=int))
    with pytest.raises(UntrainedModel):
        learn.predict_proba(learn.ForestModel(learn.RFParams(), 2, 5, 3, [], []), X)
    with pytest.raises(FoldTooSmall):
        learn.stratified_folds(np.array([0, 0, 0, 1, 1]), 5)


def test_stratified_folds_balance():
    y = np.repeat([0, 1, 2, 3], 25)
    folds = learn.stratified_folds(y, 5, seed=3)
    for f in range(5):
        assert np.bincount(y[folds == f], minlength=4).tolist() == [5, 5, 5, 5]


def test_grid_search_single_cell_and_xor():
    rng = np.random.default_rng(0)
    A = rng.uniform(-1, 1, (400, 2))
    X = np.column_stack([A, rng.normal(size=(400, 3))])
    y = ((A[:, 0] > 0) ^ (A[:, 1] > 0)).astype(int)
    best, table = learn.grid_search(X, y, [{"n_estimators": 5, "max_depth": 3}], kind="rf")
    assert best == {"n_estimators": 5, "max_depth": 3} and len(table) == 1
    best, table = learn.grid_search(X, y, {"n_estimators": [10], "max_depth": [1, 6]}, kind="rf")
    assert best["max_depth"] == 6
    weak, strong = table
    assert strong.mean_accuracy > weak.mean_accuracy
    text = learn.cv_table_csv(table)
    assert text.splitlines()[0] == "max_depth,n_estimators,mean_accuracy"


def test_grid_ties_keep_first_cell():
    X, y = _separable()
    best, _ = learn.grid_search(X, y, [{"n_estimators": 3, "seed": 1}, {"n_estimators": 3, "seed": 2}], kind="rf")
    assert best["seed"] == 1


def test_importance_single_informative_feature():
    X, y = _separable()
    imp = learn.feature_importance(learn.train_gb(X, y, learn.GBParams(n_estimators=5)))
    assert imp == pytest.approx([1, 0, 0, 0, 0], abs=1e-9)


def test_current_beats_temperature_on_throttle_data():
    X, y = learn.build_dataset(throttle_runs(800))
    model = learn.train_rf(X, y, learn.RFParams(n_estimators=20))
    imp = learn.feature_importance(model)
    assert imp[learn.FEATURES.index("current")] > imp[learn.FEATURES.index("temperature")]
    assert imp.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("kind", ["rf", "gb"])
def test_json_round_trip(kind):
    X, y = _separable()
    params = learn.RFParams(n_estimators=5) if kind == "rf" else learn.GBParams(n_estimators=5)
    model = learn.train(kind, X, y, params)
    back = learn.model_from_json(learn.model_to_json(model))
    assert np.array_equal(learn.predict_proba(model, X), learn.predict_proba(back, X))
    assert learn.model_to_json(back) == learn.model_to_json(model)
