import json

import numpy as np
import pytest

from rrvqa.errors import ConfigurationError, DataError, EmptyInputError, ModelFormatError
from rrvqa.gbt import (
    GbtModel,
    GbtParams,
    TrainingSet,
    Tree,
    dumps_model,
    gain_importance,
    importance_ranking,
    load_model,
    loads_model,
    model_to_dict,
    permutation_importance,
    predict,
    predict_batch,
    save_model,
    train,
    with_learning_rate,
)

from oracles import best_split

FULL = dict(subsample=1.0, colsample_bytree=1.0)


def _regression(rng, n=80, p=8):
    X = rng.normal(size=(n, p))
    y = 3 + X[:, 0] - 0.5 * X[:, 3] ** 2 + 0.3 * rng.normal(size=n)
    return TrainingSet(X, y)


def _stump(feature, threshold, lo, hi):
    return Tree(np.array([feature, -1, -1]), np.array([threshold, 0.0, 0.0]),
                np.array([1, -1, -1]), np.array([2, -1, -1]),
                np.array([0.0, lo, hi]), np.array([1.0, 0.0, 0.0]))


class TestTraining:
    def test_depth_zero_predicts_label_mean(self, rng):
        data = _regression(rng)
        model = train(data, GbtParams(n_estimators=1, max_depth=0, learning_rate=0.7))
        assert np.all(predict_batch(model, rng.normal(size=(20, 8))) == model.base_score)
        assert model.base_score == pytest.approx(data.y.mean(), abs=1e-12)

    def test_step_function_is_recovered_exactly(self):
        x0 = np.array([-4, -3, -2, -1, 0, 1, 2, 3], dtype=float)
        X = np.zeros((8, 8))
        X[:, 0] = x0
        y = np.where(x0 < 0, 1.0, 5.0)
        model = train(TrainingSet(X, y), GbtParams(n_estimators=1, max_depth=1, learning_rate=1.0,
                                                   reg_lambda=0.0, **FULL))
        tree = model.trees[0]
        assert tree.feature[0] == 0 and tree.threshold[0] == -0.5
        assert predict_batch(model, X).tolist() == y.tolist()

    def test_training_rmse_non_increasing(self, rng):
        model = train(_regression(rng), GbtParams(n_estimators=60, max_depth=3, learning_rate=0.1,
                                                  **FULL))
        r = np.array(model.train_rmse)
        assert len(r) == 60
        assert np.all(np.diff(r) <= 1e-12)

    def test_depth_limit(self, rng):
        model = train(_regression(rng), GbtParams(n_estimators=5, max_depth=2))
        assert all(t.depth() <= 2 for t in model.trees)

    @pytest.mark.parametrize("seed", range(10))
    def test_root_split_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 17))
        X = rng.integers(0, 6, size=(n, 8)).astype(float)
        y = rng.normal(size=n)
        model = train(TrainingSet(X, y), GbtParams(n_estimators=1, max_depth=1, reg_lambda=0.0,
                                                   **FULL))
        g = list(np.full(n, y.mean()) - y)
        gain, f, thr = best_split(X, g)
        tree = model.trees[0]
        if gain <= 1e-12:
            assert tree.n_nodes == 1
        else:
            assert (tree.feature[0], tree.threshold[0]) == (f, thr)
            assert tree.gain[0] == pytest.approx(gain, rel=1e-9, abs=1e-12)

    def test_row_order_invariance(self, rng):
        data = _regression(rng, n=60)
        params = GbtParams(n_estimators=20, max_depth=4, **FULL)
        perm = rng.permutation(60)
        a = train(data, params)
        b = train(data.subset(perm), params)
        Z = rng.normal(size=(50, 8))
        assert np.array_equal(predict_batch(a, Z), predict_batch(b, Z))

    def test_overfit_small_set(self, rng):
        data = TrainingSet(rng.uniform(size=(50, 8)), rng.uniform(1, 5, 50))
        model = train(data, GbtParams(n_estimators=300, max_depth=8, learning_rate=0.3))
        assert model.train_rmse[-1] <= 0.05

    def test_tuned_defaults_train(self, rng):
        model = train(_regression(rng))
        assert len(model.trees) == 95
        assert model.learning_rate == 0.072

    def test_errors(self):
        with pytest.raises(EmptyInputError):
            train(TrainingSet(np.zeros((0, 8)), np.zeros(0)))
        with pytest.raises(DataError, match="row 1"):
            TrainingSet(np.array([[0.0] * 8, [np.nan] + [0.0] * 7]), [1, 2])
        with pytest.raises(DataError):
            train(TrainingSet(np.zeros((3, 2)), np.zeros(3)))
        for bad in (dict(n_estimators=0), dict(max_depth=-1), dict(learning_rate=0.0),
                    dict(subsample=1.5), dict(colsample_bytree=0.0), dict(reg_lambda=-1)):
            with pytest.raises(ConfigurationError):
                GbtParams(**bad)

    def test_params_dict_round_trip(self):
        p = GbtParams(reg_lambda=2.5, seed=7)
        d = p.to_dict()
        assert d["lambda"] == 2.5 and "reg_lambda" not in d
        assert GbtParams.from_dict(d) == p
        with pytest.raises(ConfigurationError):
            GbtParams.from_dict({"eta": 0.1})


class TestPrediction:
    def test_hand_routed_stump(self):
        model = GbtModel(3.0, 0.5, (_stump(7, 0.0, -1.0, 1.0),))
        z = np.zeros(8)
        z[7] = 0.9
        assert predict(model, z) == 3.5
        z[7] = -0.2
        assert predict(model, z) == 2.5
        z[7] = 0.0
        assert predict(model, z) == 3.5

    def test_no_trees(self):
        assert predict(GbtModel(2.25, 0.1, ()), np.ones(8)) == 2.25

    def test_batch_equals_single(self, rng):
        model = train(_regression(rng), GbtParams(n_estimators=10))
        Z = rng.normal(size=(100, 8))
        assert predict_batch(model, Z).tolist() == [predict(model, z) for z in Z]

    def test_zero_learning_rate(self, rng):
        model = with_learning_rate(train(_regression(rng), GbtParams(n_estimators=10)), 0.0)
        assert np.all(predict_batch(model, rng.normal(size=(30, 8))) == model.base_score)

    def test_wrong_width(self):
        with pytest.raises(DataError):
            predict_batch(GbtModel(0.0, 1.0, ()), np.zeros((2, 5)))


class TestImportance:
    def test_single_feature(self):
        model = GbtModel(0.0, 1.0, (_stump(0, 1.0, 0, 1), _stump(0, 2.0, 0, 1)))
        assert gain_importance(model).tolist() == [1.0] + [0.0] * 7

    def test_no_splits(self, rng):
        model = train(_regression(rng), GbtParams(n_estimators=3, max_depth=0))
        imp = gain_importance(model)
        assert imp.tolist() == [0.0] * 8
        assert [name for name, _ in importance_ranking(model)][:2] == ["r_E", "r_h"]

    def test_ssim_driven_labels(self, rng):
        X = rng.normal(size=(200, 8))
        X[:, 7] = rng.uniform(0.5, 1.0, 200)
        y = 5 * X[:, 7] + 0.05 * rng.normal(size=200)
        model = train(TrainingSet(X, y), GbtParams(n_estimators=30, max_depth=3))
        imp = gain_importance(model)
        assert int(np.argmax(imp)) == 7
        assert imp.sum() == pytest.approx(1.0, abs=1e-12)
        assert importance_ranking(model)[0][0] == "mu_ssim"
        perm = permutation_importance(model, TrainingSet(X, y), seed=1)
        assert int(np.argmax(perm)) == 7


class TestSerialization:
    def test_round_trip(self, rng, tmp_path):
        model = train(_regression(rng), GbtParams(n_estimators=15, max_depth=4))
        save_model(model, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        Z = rng.normal(size=(100, 8))
        assert np.array_equal(predict_batch(back, Z), predict_batch(model, Z))
        assert dumps_model(back) == dumps_model(model)

    def test_deterministic_bytes(self, rng):
        data = _regression(rng)
        p = GbtParams(n_estimators=20, max_depth=5, subsample=0.7, colsample_bytree=0.6, seed=3)
        assert dumps_model(train(data, p)) == dumps_model(train(data, p))
        assert dumps_model(train(data, p)) != dumps_model(train(data, GbtParams(
            n_estimators=20, max_depth=5, subsample=0.7, colsample_bytree=0.6, seed=4)))

    def test_hand_written_file(self, tmp_path):
        text = json.dumps({
            "format_version": 1, "base_score": 3.0, "learning_rate": 0.5,
            "feature_names": ["r_E", "r_h", "r_L", "r_EU", "r_LU", "r_EV", "r_LV", "mu_ssim"],
            "trees": [{"nodes": [
                {"feature": 7, "threshold": 0.8, "left": 1, "right": 2},
                {"leaf": -2.0},
                {"feature": 0, "threshold": 0.0, "left": 3, "right": 4},
                {"leaf": 0.5},
                {"leaf": 1.0},
            ]}],
        })
        (tmp_path / "hand.json").write_text(text)
        model = load_model(tmp_path / "hand.json")
        assert predict(model, [0, 0, 0, 0, 0, 0, 0, 0.5]) == 2.0
        assert predict(model, [-1, 0, 0, 0, 0, 0, 0, 0.9]) == 3.25
        assert predict(model, [1, 0, 0, 0, 0, 0, 0, 0.9]) == 3.5

    def _broken(self, rng, mutate):
        model = train(_regression(rng), GbtParams(n_estimators=2, max_depth=2, **FULL))
        d = model_to_dict(model)
        mutate(d)
        return json.dumps(d)

    def test_child_out_of_range(self, rng):
        def mutate(d):
            d["trees"][0]["nodes"][0]["left"] = 99
        with pytest.raises(ModelFormatError, match=r"\$\.trees\[0\]\.nodes\[0\]\.left"):
            loads_model(self._broken(rng, mutate))

    @pytest.mark.parametrize("mutate, pattern", [
        (lambda d: d.pop("trees"), r"\$\.trees"),
        (lambda d: d.update(format_version=2), r"\$\.format_version"),
        (lambda d: d["trees"][0]["nodes"][0].update(feature=8), r"nodes\[0\]\.feature"),
        (lambda d: d["trees"][0]["nodes"][0].update(threshold="x"), r"nodes\[0\]\.threshold"),
        (lambda d: d["trees"][1].update(nodes=[]), r"\$\.trees\[1\]\.nodes"),
        (lambda d: d["trees"][0]["nodes"][0].update(right=d["trees"][0]["nodes"][0]["left"]),
         r"nodes\[0\]"),
    ])
    def test_structural_errors(self, rng, mutate, pattern):
        with pytest.raises(ModelFormatError, match=pattern):
            loads_model(self._broken(rng, mutate))

    def test_not_json(self):
        with pytest.raises(ModelFormatError):
            loads_model("{not json")
