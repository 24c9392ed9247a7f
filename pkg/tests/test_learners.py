"""Regression learners, cross-validation, and learner parsing."""

import numpy as np
import pytest

from trialpower.exceptions import ValidationError
from trialpower.learners import (
    BoostedTreesRegressor,
    KNNRegressor,
    LinearRegressor,
    SelectingEnsembleRegressor,
    ZeroRegressor,
    clone_learner,
    cross_val_mse,
    cross_val_rmse,
    default_ensemble_members,
    kfold_indices,
    parse_learner,
)


def linear_data(n=200, d=3, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, d))
    w = np.arange(1, d + 1, dtype=float)
    y = X @ w + 1.0 + noise * rng.normal(size=n)
    return X, y


class TestLinearRegressor:
    def test_exact_recovery(self):
        rng = np.random.default_rng(10)
        X = rng.uniform(-2, 2, size=(50, 1))
        y = 2.0 * X[:, 0] + 1.0
        model = LinearRegressor().fit(X, y)
        assert np.max(np.abs(model.predict(X) - y)) < 1e-8
        assert model.intercept_ == pytest.approx(1.0, abs=1e-9)
        assert model.coef_[0] == pytest.approx(2.0, abs=1e-9)

    def test_intercept_only_when_no_covariates(self):
        X = np.empty((5, 0))
        y = np.array([1.0, 2.0, 3.0, 4.0, 10.0])
        model = LinearRegressor().fit(X, y)
        assert model.predict(np.empty((3, 0))) == pytest.approx(np.full(3, 4.0))

    def test_ridge_fallback_on_duplicate_columns(self):
        X, y = linear_data(n=80, d=2, seed=11)
        X_dup = np.column_stack([X, X[:, 0]])
        model = LinearRegressor().fit(X_dup, y)
        assert np.max(np.abs(model.predict(X_dup) - y)) < 1e-4

    def test_zero_column_invariance(self):
        # the zero column makes X'X singular, so the ridge fallback engages;
        # its 1e-8-scale diagonal bump bounds the prediction shift
        X, y = linear_data(n=60, d=2, noise=0.3, seed=12)
        base = LinearRegressor().fit(X, y).predict(X)
        padded = np.column_stack([X, np.zeros(60)])
        with_zeros = LinearRegressor().fit(padded, y).predict(padded)
        assert with_zeros == pytest.approx(base, abs=1e-6)


class TestKNNRegressor:
    def test_k1_identity_at_training_points(self):
        X, y = linear_data(n=40, d=2, noise=1.0, seed=13)
        model = KNNRegressor(k=1).fit(X, y)
        assert model.predict(X) == pytest.approx(y, abs=1e-12)

    def test_k_equals_n_gives_global_mean(self):
        X, y = linear_data(n=25, d=2, noise=1.0, seed=14)
        model = KNNRegressor(k=25).fit(X, y)
        assert model.predict(X[:4]) == pytest.approx(np.full(4, y.mean()), abs=1e-12)

    def test_k_capped_at_n(self):
        X = np.array([[0.0], [1.0], [2.0]])
        y = np.array([3.0, 6.0, 9.0])
        model = KNNRegressor(k=10).fit(X, y)
        assert model.k_effective_ == 3
        assert model.predict(np.array([[5.0]]))[0] == pytest.approx(6.0, abs=1e-12)

    def test_distance_ties_prefer_lower_index(self):
        X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
        y = np.array([0.0, 2.0, 100.0])
        model = KNNRegressor(k=2).fit(X, y)
        # all three training points sit at distance 1 from the origin
        assert model.predict(np.array([[0.0, 0.0]]))[0] == pytest.approx(1.0, abs=1e-12)

    def test_prediction_within_response_range(self):
        rng = np.random.default_rng(15)
        X = rng.normal(size=(100, 4))
        y = rng.normal(size=100)
        model = KNNRegressor(k=7).fit(X, y)
        preds = model.predict(rng.normal(size=(300, 4)))
        assert preds.min() >= y.min() - 1e-12
        assert preds.max() <= y.max() + 1e-12


class TestBoostedTreesRegressor:
    def test_constant_response_reproduced(self):
        rng = np.random.default_rng(16)
        X = rng.normal(size=(30, 3))
        y = np.full(30, 4.25)
        model = BoostedTreesRegressor().fit(X, y)
        assert np.max(np.abs(model.predict(X) - 4.25)) < 1e-8

    def test_training_mse_nonincreasing(self):
        rng = np.random.default_rng(17)
        X = rng.uniform(-1, 1, size=(120, 5))
        y = np.sin(3 * X[:, 0]) + rng.normal(0, 0.2, size=120)
        model = BoostedTreesRegressor().fit(X, y)
        path = model.train_mse_path_
        assert len(path) == 50
        assert all(b <= a + 1e-12 for a, b in zip(path, path[1:]))

    def test_interpolates_small_samples(self):
        rng = np.random.default_rng(18)
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        model = BoostedTreesRegressor().fit(X, y)
        assert model.train_mse_path_[-1] < 0.02 * y.var()

    def test_deterministic_refits(self):
        rng = np.random.default_rng(19)
        X = rng.normal(size=(80, 4))
        y = rng.normal(size=80)
        X_new = rng.normal(size=(40, 4))
        a = BoostedTreesRegressor().fit(X, y).predict(X_new)
        b = BoostedTreesRegressor().fit(X, y).predict(X_new)
        assert np.array_equal(a, b)

    def test_learns_step_function(self):
        X = np.linspace(-1, 1, 200).reshape(-1, 1)
        y = np.where(X[:, 0] > 0, 2.0, -2.0)
        model = BoostedTreesRegressor().fit(X, y)
        preds = model.predict(np.array([[-0.5], [0.5]]))
        assert preds[0] == pytest.approx(-2.0, abs=0.05)
        assert preds[1] == pytest.approx(2.0, abs=0.05)


class TestSelectingEnsemble:
    def test_selects_linear_model_on_linear_data(self):
        X, y = linear_data(n=250, d=3, noise=0.1, seed=20)
        model = SelectingEnsembleRegressor(random_state=0).fit(X, y)
        assert model.selected_index_ == 0
        assert isinstance(model.model_, LinearRegressor)

    def test_selected_cv_mse_is_the_minimum(self):
        rng = np.random.default_rng(21)
        X = rng.uniform(-1, 1, size=(150, 4))
        y = np.sign(X[:, 0]) + rng.normal(0, 0.5, size=150)
        model = SelectingEnsembleRegressor(random_state=3).fit(X, y)
        assert model.cv_mses_[model.selected_index_] == min(model.cv_mses_)

    def test_ties_keep_earliest_member(self):
        X, y = linear_data(n=100, d=2, noise=0.2, seed=22)
        members = [LinearRegressor(), LinearRegressor()]
        model = SelectingEnsembleRegressor(members=members, random_state=5).fit(X, y)
        assert model.cv_mses_[0] == model.cv_mses_[1]
        assert model.selected_index_ == 0

    def test_single_member_matches_bare_learner_cv(self):
        X, y = linear_data(n=90, d=2, noise=0.5, seed=23)
        wrapped = cross_val_mse(SelectingEnsembleRegressor(members=[LinearRegressor()]),
                                X, y, folds=5, random_state=7)
        bare = cross_val_mse(LinearRegressor(), X, y, folds=5, random_state=7)
        assert wrapped == bare

    def test_default_members(self):
        members = default_ensemble_members()
        assert [type(m) for m in members] == [
            LinearRegressor, KNNRegressor, BoostedTreesRegressor]
        assert members[1].k == 5
        assert members[2].n_trees == 50
        assert members[2].max_depth == 5

    def test_empty_members_rejected(self):
        X, y = linear_data(n=20)
        with pytest.raises(ValidationError):
            SelectingEnsembleRegressor(members=[]).fit(X, y)


class TestCrossValidation:
    def test_noiseless_linear_ols(self):
        X, y = linear_data(n=100, d=3, noise=0.0, seed=24)
        assert cross_val_mse(LinearRegressor(), X, y, folds=5, random_state=0) <= 1e-10
        assert cross_val_rmse(LinearRegressor(), X, y, folds=5, random_state=0) <= 1e-5

    def test_pure_noise_ensemble_near_unit_mse(self):
        # y independent of X: the best possible MSE is 1, CV sits slightly above
        rng = np.random.default_rng(25)
        X = rng.uniform(-1, 1, size=(5000, 10))
        y = rng.normal(size=5000)
        mse = cross_val_mse(SelectingEnsembleRegressor(), X, y, folds=5, random_state=0)
        assert 0.95 <= mse <= 1.10
        rmse = cross_val_rmse(SelectingEnsembleRegressor(), X, y, folds=5, random_state=0)
        assert 0.975 <= rmse <= 1.05
        assert rmse == pytest.approx(np.sqrt(mse), abs=1e-12)

    def test_rmse_is_root_of_mse(self):
        X, y = linear_data(n=60, d=2, noise=1.0, seed=26)
        mse = cross_val_mse(KNNRegressor(), X, y, folds=4, random_state=9)
        rmse = cross_val_rmse(KNNRegressor(), X, y, folds=4, random_state=9)
        assert rmse == pytest.approx(np.sqrt(mse), abs=1e-14)

    def test_deterministic_given_seed(self):
        X, y = linear_data(n=70, d=2, noise=1.0, seed=27)
        a = cross_val_mse(KNNRegressor(), X, y, folds=5, random_state=42)
        b = cross_val_mse(KNNRegressor(), X, y, folds=5, random_state=42)
        assert a == b

    def test_folds_exceeding_rows_rejected(self):
        X, y = linear_data(n=4)
        with pytest.raises(ValidationError):
            cross_val_mse(LinearRegressor(), X, y, folds=5, random_state=0)


class TestKfoldIndices:
    def test_partition_covers_all_rows(self):
        rng = np.random.default_rng(28)
        parts = kfold_indices(23, 5, rng)
        assert len(parts) == 5
        combined = np.sort(np.concatenate(parts))
        assert np.array_equal(combined, np.arange(23))

    def test_sizes_differ_by_at_most_one(self):
        rng = np.random.default_rng(29)
        sizes = [len(p) for p in kfold_indices(23, 5, rng)]
        assert max(sizes) - min(sizes) <= 1

    def test_requires_at_least_two_folds(self):
        rng = np.random.default_rng(30)
        with pytest.raises(ValidationError):
            kfold_indices(10, 1, rng)


class TestParseLearner:
    def test_known_specs(self):
        assert isinstance(parse_learner("ols"), LinearRegressor)
        assert isinstance(parse_learner("knn"), KNNRegressor)
        assert parse_learner("knn").k == 5
        assert parse_learner("knn:11").k == 11
        assert isinstance(parse_learner("gbm"), BoostedTreesRegressor)
        assert isinstance(parse_learner("ensemble"), SelectingEnsembleRegressor)
        assert isinstance(parse_learner("null"), ZeroRegressor)
        assert isinstance(parse_learner("  OLS "), LinearRegressor)

    def test_bad_specs(self):
        for spec in ("forest", "knn:abc", "ols:2", "gbm:10", ""):
            with pytest.raises(ValidationError):
                parse_learner(spec)


class TestLearnerProtocol:
    def test_clone_is_unfitted_with_same_params(self):
        model = KNNRegressor(k=3)
        X, y = linear_data(n=20, d=2)
        model.fit(X, y)
        fresh = clone_learner(model)
        assert fresh.k == 3
        assert not hasattr(fresh, "X_train_")

    def test_clone_copies_nested_members(self):
        ens = SelectingEnsembleRegressor(members=[KNNRegressor(k=2)], random_state=4)
        copy = clone_learner(ens)
        assert copy.members[0] is not ens.members[0]
        assert copy.members[0].k == 2
        assert copy.random_state == 4

    def test_get_set_params_round_trip(self):
        model = BoostedTreesRegressor(n_trees=10, max_depth=2)
        params = model.get_params()
        assert params["n_trees"] == 10
        model.set_params(n_trees=20)
        assert model.n_trees == 20
        with pytest.raises(ValidationError):
            model.set_params(bogus=1)

    def test_predict_requires_fit(self):
        with pytest.raises(ValidationError):
            KNNRegressor().predict(np.zeros((2, 2)))

    def test_predict_checks_feature_count(self):
        X, y = linear_data(n=20, d=2)
        model = LinearRegressor().fit(X, y)
        with pytest.raises(ValidationError):
            model.predict(np.zeros((3, 5)))

    def test_rejects_empty_and_nonfinite_data(self):
        with pytest.raises(ValidationError):
            LinearRegressor().fit(np.zeros((0, 2)), np.zeros(0))
        with pytest.raises(ValidationError):
            LinearRegressor().fit(np.array([[np.nan], [1.0]]), np.zeros(2))
        with pytest.raises(ValidationError):
            LinearRegressor().fit(np.zeros((2, 1)), np.array([1.0, np.inf]))

    def test_zero_regressor_predicts_zero(self):
        X, y = linear_data(n=10, d=2, noise=1.0)
        model = ZeroRegressor().fit(X, y)
        assert np.array_equal(model.predict(X), np.zeros(10))
