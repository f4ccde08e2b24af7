from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from app.errors import ForestError
from app.schemas import ForestConfig
from app.services.forest import (
    forest_from_dict,
    forest_to_dict,
    oob_score,
    permutation_importance,
    resolve_mtry,
    train_forest,
)


def _separable(n: int, seed: int, p: int = 5) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    df = pd.DataFrame(X, columns=[f"x{i}" for i in range(p)])
    df["y"] = (df["x0"] > 0).astype(int)
    return df


def test_separable_target_oob_accuracy():
    df = _separable(200, 0)
    forest = train_forest(df, "y", ForestConfig(n_trees=100, seed=1))
    assert oob_score(forest, df, "y") >= 0.95


def test_coin_flip_target_oob_accuracy():
    rng = np.random.default_rng(4)
    df = pd.DataFrame(rng.normal(size=(500, 5)), columns=list("abcde"))
    df["y"] = rng.integers(0, 2, 500)
    forest = train_forest(df, "y", ForestConfig(n_trees=100, seed=2))
    assert 0.40 <= oob_score(forest, df, "y") <= 0.60


def test_thread_count_does_not_change_the_forest():
    df = _separable(150, 3)
    one = train_forest(df, "y", ForestConfig(n_trees=40, seed=9, n_jobs=1))
    many = train_forest(df, "y", ForestConfig(n_trees=40, seed=9, n_jobs=8))
    np.testing.assert_array_equal(one.predict_proba_matrix(df), many.predict_proba_matrix(df))
    a = permutation_importance(one, df, "y")
    b = permutation_importance(many, df, "y")
    np.testing.assert_array_equal(a.per_tree, b.per_tree)


def test_oob_fraction_is_near_one_over_e():
    df = _separable(1000, 5, p=2)
    forest = train_forest(df, "y", ForestConfig(n_trees=200, seed=3, max_depth=2))
    assert 0.33 <= forest.oob_fraction() <= 0.41
    for oob in forest.oob:
        assert np.all(np.diff(oob) > 0)


def test_predict_proba_is_mean_of_tree_outputs():
    df = _separable(120, 6)
    forest = train_forest(df, "y", ForestConfig(n_trees=25, seed=4))
    rows = df.drop(columns="y").sample(20, random_state=0)
    X = rows.to_numpy()
    expected = np.mean([t.predict(X) for t in forest.trees], axis=0)
    np.testing.assert_allclose(forest.predict_proba_matrix(rows), expected)
    row = rows.iloc[0].to_dict()
    assert forest.predict_proba(row) == pytest.approx(expected[0])
    assert 0.0 <= forest.predict_proba(row) <= 1.0


def test_single_tree_forest_returns_leaf_fraction():
    df = _separable(60, 7)
    forest = train_forest(df, "y", ForestConfig(n_trees=1, seed=5, min_leaf=10))
    X = df.drop(columns="y").to_numpy()
    np.testing.assert_array_equal(forest.predict_proba_matrix(X), forest.trees[0].predict(X))


def test_predict_proba_missing_column():
    df = _separable(40, 8)
    forest = train_forest(df, "y", ForestConfig(n_trees=3, seed=0))
    with pytest.raises(ForestError, match="missing column x3"):
        forest.predict_proba({"x0": 1.0, "x1": 0.0, "x2": 0.0, "x4": 0.0})


def test_degenerate_target():
    df = _separable(30, 1)
    df["y"] = 1
    with pytest.raises(ForestError, match="degenerate target"):
        train_forest(df, "y")


def test_permutation_importance_separates_signal_from_noise():
    df = _separable(200, 0)
    forest = train_forest(df, "y", ForestConfig(n_trees=100, seed=1))
    imp = permutation_importance(forest, df, "y")
    assert imp.per_tree.shape == (100, 5)
    assert imp.mean[0] >= 0.25
    assert np.all(np.abs(imp.mean[1:]) <= 0.05)
    assert imp.as_frame()["feature"].tolist() == ["x0", "x1", "x2", "x3", "x4"]


def test_unused_features_have_zero_importance_per_tree():
    df = _separable(100, 2)
    forest = train_forest(df, "y", ForestConfig(n_trees=30, seed=6))
    imp = permutation_importance(forest, df, "y")
    for t, tree in enumerate(forest.trees):
        unused = set(range(5)) - tree.used_features()
        assert all(imp.per_tree[t, j] == 0.0 for j in unused)


def test_resolve_mtry_defaults_to_sqrt():
    assert resolve_mtry(ForestConfig(), 20) == 4
    with pytest.raises(ForestError):
        resolve_mtry(ForestConfig(mtry=6), 5)


def test_forest_document_keeps_predictions():
    df = _separable(80, 4)
    forest = train_forest(df, "y", ForestConfig(n_trees=5, seed=2))
    again = forest_from_dict(forest_to_dict(forest))
    np.testing.assert_array_equal(again.predict_proba_matrix(df), forest.predict_proba_matrix(df))
    with pytest.raises(ForestError):
        forest_from_dict({"format": "other", "version": 1})
