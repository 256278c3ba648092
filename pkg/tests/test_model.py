import numpy as np
import pytest

from ffdlab.model import (
    DimensionMismatch,
    EmptyInput,
    LengthMismatch,
    MlpConfig,
    MlpModel,
    NonFiniteLoss,
    classification_report,
    format_report,
    forward,
    load_model,
    loss_and_gradients,
    predict,
    save_model,
    train,
)

from conftest import make_dataset


def separable_dataset(n_per_class=200, n_features=16, noise=0.5, seed=8):
    rng = np.random.default_rng(seed)
    X, y = [], []
    for cls in range(3):
        center = np.zeros(n_features)
        center[cls] = 4.0
        X.append(center + rng.normal(0, noise, size=(n_per_class, n_features)))
        y.append(np.full(n_per_class, cls))
    X = np.vstack(X)
    y = np.concatenate(y)
    order = rng.permutation(len(y))
    X, y = X[order], y[order]
    return make_dataset(X, y, split_index=int(0.8 * len(y)))


def zeroed_output_model(cfg):
    model = MlpModel.initialize(cfg)
    model.params["out_w"][:] = 0.0
    model.params["out_b"][:] = 0.0
    return model


class TestForward:
    def test_zero_output_layer_gives_uniform_probs(self):
        cfg = MlpConfig(input_dim=4, hidden_dim=8, n_residual_blocks=1, seed=0)
        model = zeroed_output_model(cfg)
        logits, probs = forward(model, np.random.default_rng(1).normal(size=(6, 4)))
        np.testing.assert_array_equal(logits, 0.0)
        np.testing.assert_allclose(probs, 1.0 / 3.0, atol=1e-12)

    def test_hand_traced_two_layer_forward(self):
        cfg = MlpConfig(input_dim=2, hidden_dim=2, n_residual_blocks=0, seed=0)
        model = MlpModel.initialize(cfg)
        model.params["in_w1"] = np.array([[1.0, 0.0], [0.0, 1.0]])
        model.params["in_b1"] = np.array([0.5, -1.0])
        model.params["in_w2"] = np.array([[1.0, 1.0], [0.0, 1.0]])
        model.params["in_b2"] = np.array([0.0, 0.0])
        model.params["out_w"] = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        model.params["out_b"] = np.array([0.1, 0.0, -0.1])
        logits, _ = forward(model, np.array([[1.0, 2.0], [-2.0, 0.5]]))
        # row 1: u0=[1.5,1] -> a0=[1.5,1] -> z=[1.5,2.5] -> logits [1.6,2.5,-0.1]
        np.testing.assert_allclose(logits[0], [1.6, 2.5, -0.1], atol=1e-12)
        # row 2: u0=[-1.5,-0.5] -> a0=[0,0] -> z=[0,0] -> logits = out_b
        np.testing.assert_allclose(logits[1], [0.1, 0.0, -0.1], atol=1e-12)

    def test_probability_rows_sum_to_one(self, rng):
        cfg = MlpConfig(input_dim=5, hidden_dim=16, n_residual_blocks=2, seed=2)
        model = MlpModel.initialize(cfg)
        _, probs = forward(model, rng.normal(size=(5, 5)))
        assert probs.shape == (5, 3)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(probs > 0)

    def test_zeroed_residual_blocks_are_identity(self, rng):
        cfg = MlpConfig(input_dim=3, hidden_dim=6, n_residual_blocks=3, seed=4)
        with_blocks = MlpModel.initialize(cfg)
        for i in range(3):
            for suffix in ("w1", "b1", "w2", "b2"):
                with_blocks.params[f"res{i}_{suffix}"][:] = 0.0
        without = MlpModel(
            config=MlpConfig(input_dim=3, hidden_dim=6, n_residual_blocks=0, seed=4),
            params={
                k: v.copy() for k, v in with_blocks.params.items() if not k.startswith("res")
            },
        )
        X = rng.normal(size=(7, 3))
        np.testing.assert_array_equal(forward(with_blocks, X)[0], forward(without, X)[0])

    def test_dimension_mismatch(self):
        cfg = MlpConfig(input_dim=4, hidden_dim=8, seed=0)
        model = MlpModel.initialize(cfg)
        with pytest.raises(DimensionMismatch):
            forward(model, np.zeros((3, 5)))


class TestGradients:
    def test_analytic_matches_central_differences(self):
        cfg = MlpConfig(input_dim=4, hidden_dim=5, n_residual_blocks=1, seed=3)
        model = MlpModel.initialize(cfg)
        rng = np.random.default_rng(12)
        X = rng.normal(size=(8, 4))
        y = rng.integers(0, 3, size=8)
        _, grads = loss_and_gradients(model, X, y)
        h = 1e-6
        for name, param in model.params.items():
            numeric = np.zeros_like(param)
            it = np.nditer(param, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = param[idx]
                param[idx] = orig + h
                lp, _ = loss_and_gradients(model, X, y)
                param[idx] = orig - h
                lm, _ = loss_and_gradients(model, X, y)
                param[idx] = orig
                numeric[idx] = (lp - lm) / (2 * h)
            denom = np.maximum(np.abs(grads[name]) + np.abs(numeric), 1e-8)
            rel = np.abs(grads[name] - numeric) / denom
            assert rel.max() < 1e-4, f"gradient mismatch in {name}"

    def test_uniform_model_loss_is_ln3(self, rng):
        cfg = MlpConfig(input_dim=4, hidden_dim=8, n_residual_blocks=1, seed=0)
        model = zeroed_output_model(cfg)
        X = rng.normal(size=(10, 4))
        y = rng.integers(0, 3, size=10)
        loss, _ = loss_and_gradients(model, X, y)
        assert loss == pytest.approx(np.log(3.0), abs=1e-12)

    def test_loss_nonnegative(self, rng):
        cfg = MlpConfig(input_dim=4, hidden_dim=8, seed=1)
        model = MlpModel.initialize(cfg)
        X = rng.normal(size=(10, 4))
        y = rng.integers(0, 3, size=10)
        loss, _ = loss_and_gradients(model, X, y)
        assert loss >= 0.0


class TestTrain:
    def test_learns_separable_clusters(self):
        ds = separable_dataset()
        cfg = MlpConfig(input_dim=16, hidden_dim=32, n_residual_blocks=2, epochs=60, seed=1)
        model = train(ds, cfg)
        train_acc = (predict(model, ds.X_train) == ds.y_train).mean()
        test_acc = (predict(model, ds.X_test) == ds.y_test).mean()
        assert train_acc >= 0.95
        assert test_acc >= 0.90

    def test_zero_learning_rate_freezes_parameters(self):
        ds = separable_dataset(n_per_class=40)
        cfg = MlpConfig(input_dim=16, hidden_dim=8, epochs=5, learning_rate=0.0, seed=9)
        model = train(ds, cfg)
        fresh = MlpModel.initialize(cfg)
        for name in fresh.params:
            np.testing.assert_array_equal(model.params[name], fresh.params[name])
        np.testing.assert_allclose(
            model.loss_history, model.loss_history[0], rtol=0, atol=1e-12
        )

    def test_memorizes_single_sample(self):
        X = np.array([[0.5, -1.0, 2.0]])
        ds = make_dataset(np.repeat(X, 2, axis=0), np.array([2, 2]), split_index=1)
        cfg = MlpConfig(input_dim=3, hidden_dim=8, epochs=200, batch_size=1, seed=5)
        model = train(ds, cfg)
        assert model.loss_history[-1] < 0.01

    def test_deterministic_loss_history(self):
        ds = separable_dataset(n_per_class=50)
        cfg = MlpConfig(input_dim=16, hidden_dim=16, epochs=8, seed=123)
        a = train(ds, cfg)
        b = train(ds, cfg)
        assert a.loss_history == b.loss_history
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])

    def test_nonfinite_loss_raises(self):
        # a NaN leaking into the features poisons the loss on its batch
        X = np.ones((64, 4))
        X[3, 2] = np.nan
        ds = make_dataset(X, np.zeros(64, dtype=int), split_index=64)
        cfg = MlpConfig(input_dim=4, hidden_dim=8, epochs=1, seed=0)
        with pytest.raises(NonFiniteLoss) as err:
            train(ds, cfg)
        assert "epoch 0" in str(err.value)

    def test_batch_size_guard(self):
        ds = separable_dataset(n_per_class=10)
        cfg = MlpConfig(input_dim=16, hidden_dim=8, batch_size=1000, seed=0)
        with pytest.raises(ValueError):
            train(ds, cfg)


class TestPredict:
    def test_argmax_and_tie_break(self):
        cfg = MlpConfig(input_dim=3, hidden_dim=2, n_residual_blocks=0, seed=0)
        model = MlpModel.initialize(cfg)
        # identity-ish network: zero everything, route logits through out_b
        for name in model.params:
            model.params[name][:] = 0.0
        model.params["out_b"] = np.array([1.0, 1.0, 0.0])
        pred = predict(model, np.zeros((2, 3)))
        assert pred.tolist() == [0, 0]  # tie between classes 0 and 1 -> lowest

    def test_shift_invariance(self, rng):
        cfg = MlpConfig(input_dim=4, hidden_dim=8, seed=6)
        model = MlpModel.initialize(cfg)
        X = rng.normal(size=(20, 4))
        base = predict(model, X)
        model.params["out_b"] = model.params["out_b"] + 3.25
        np.testing.assert_array_equal(predict(model, X), base)


class TestClassificationReport:
    def test_perfect_prediction(self):
        y = np.array([0, 1, 2, 0, 1, 2])
        report = classification_report(y, y)
        np.testing.assert_array_equal(report.precision, 1.0)
        np.testing.assert_array_equal(report.recall, 1.0)
        np.testing.assert_array_equal(report.f1, 1.0)
        assert report.accuracy == 1.0
        assert np.all(np.diag(report.confusion_matrix) == report.support)

    def test_hand_counted_case(self):
        report = classification_report([0, 0, 1, 2], [0, 1, 1, 2])
        np.testing.assert_allclose(report.precision, [1.0, 0.5, 1.0])
        np.testing.assert_allclose(report.recall, [0.5, 1.0, 1.0])
        assert report.support.tolist() == [2, 1, 1]

    def test_absent_predicted_class_flagged(self):
        report = classification_report([0, 1, 2], [0, 1, 1])
        assert report.precision[2] == 0.0
        assert "precision[2]" in report.zero_division

    def test_weighted_recall_equals_accuracy(self, rng):
        y_true = rng.integers(0, 3, 100)
        y_pred = rng.integers(0, 3, 100)
        report = classification_report(y_true, y_pred)
        assert report.weighted_avg[1] == pytest.approx(report.accuracy, abs=1e-12)
        trace = np.trace(report.confusion_matrix)
        assert report.accuracy == pytest.approx(trace / report.confusion_matrix.sum())

    def test_brute_force_counts(self, rng):
        y_true = rng.integers(0, 3, 500)
        y_pred = rng.integers(0, 3, 500)
        report = classification_report(y_true, y_pred)
        for cls in range(3):
            tp = int(np.sum((y_true == cls) & (y_pred == cls)))
            fp = int(np.sum((y_true != cls) & (y_pred == cls)))
            fn = int(np.sum((y_true == cls) & (y_pred != cls)))
            assert report.precision[cls] == (tp / (tp + fp) if tp + fp else 0.0)
            assert report.recall[cls] == (tp / (tp + fn) if tp + fn else 0.0)

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            classification_report([0, 1], [0])
        with pytest.raises(EmptyInput):
            classification_report([], [])

    def test_format_report_layout(self):
        text = format_report(classification_report([0, 1, 2], [0, 1, 2]))
        assert "precision" in text and "macro avg" in text and "weighted avg" in text


class TestPersistence:
    def test_roundtrip(self, tmp_path, rng):
        ds = separable_dataset(n_per_class=40)
        cfg = MlpConfig(input_dim=16, hidden_dim=8, epochs=3, seed=2)
        model = train(ds, cfg)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.config == model.config
        assert loaded.loss_history == model.loss_history
        for name in model.params:
            np.testing.assert_array_equal(loaded.params[name], model.params[name])
        X = rng.normal(size=(5, 16))
        np.testing.assert_array_equal(predict(loaded, X), predict(model, X))

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "bogus.json"
        path.write_text("{}")
        with pytest.raises(ValueError):
            load_model(path)
