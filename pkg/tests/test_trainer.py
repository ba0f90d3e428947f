import json

import numpy as np
import pytest

from labelconf import corpus, trainer
from labelconf.errors import InputError


def finite_difference_grads(model, X, T, w_reg, w_ne, step=1e-5):
    grads = {}
    for key, param in model.params.items():
        grad = np.zeros_like(param)
        it = np.nditer(param, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            original = param[idx]
            param[idx] = original + step
            plus, _ = trainer.loss_and_gradient(model, X, T, w_reg, w_ne)
            param[idx] = original - step
            minus, _ = trainer.loss_and_gradient(model, X, T, w_reg, w_ne)
            param[idx] = original
            grad[idx] = (plus - minus) / (2 * step)
            it.iternext()
        grads[key] = grad
    return grads


def random_case(rng, hidden):
    dim = int(rng.integers(2, 6))
    C = int(rng.integers(2, 5))
    batch = int(rng.integers(2, 8))
    model = trainer.MlpClassifier(dim, hidden, C, seed=int(rng.integers(0, 1 << 31)))
    X = rng.standard_normal((batch, dim))
    T = rng.random((batch, C))
    T /= T.sum(axis=1, keepdims=True)
    return model, X, T


class TestForward:
    def test_zero_parameters_give_uniform(self):
        model = trainer.MlpClassifier(3, 0, 4, seed=0)
        model.params["W"][:] = 0.0
        model.params["b"][:] = 0.0
        probs = model.forward(np.random.default_rng(0).standard_normal((5, 3)))
        np.testing.assert_allclose(probs, 0.25, atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        for hidden in (0, 8):
            model = trainer.MlpClassifier(4, hidden, 3, seed=2)
            probs = model.forward(rng.standard_normal((10, 4)))
            np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
            assert probs.min() >= 0.0

    def test_dimension_checked(self):
        model = trainer.MlpClassifier(4, 0, 3, seed=0)
        with pytest.raises(InputError):
            model.forward(np.ones((2, 5)))

    def test_hidden_features_shape(self):
        model = trainer.MlpClassifier(4, 6, 3, seed=0)
        X = np.ones((5, 4))
        assert model.hidden_features(X).shape == (5, 6)
        linear = trainer.MlpClassifier(4, 0, 3, seed=0)
        np.testing.assert_array_equal(linear.hidden_features(X), X)


class TestLossAndGradient:
    def test_targets_equal_predictions_zero_ce_gradient(self):
        model = trainer.MlpClassifier(3, 0, 3, seed=4)
        X = np.random.default_rng(4).standard_normal((6, 3))
        T = model.forward(X)
        loss, grads = trainer.loss_and_gradient(model, X, T)
        entropy = float(-np.mean((T * np.log(T)).sum(axis=1)))
        assert loss == pytest.approx(entropy, rel=1e-12)
        for grad in grads.values():
            np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_uniform_batch_zeroes_prior_term(self):
        model = trainer.MlpClassifier(3, 0, 4, seed=5)
        model.params["W"][:] = 0.0
        model.params["b"][:] = 0.0
        X = np.random.default_rng(5).standard_normal((8, 3))
        T = np.full((8, 4), 0.25)
        base, _ = trainer.loss_and_gradient(model, X, T, 0.0, 0.0)
        with_reg, _ = trainer.loss_and_gradient(model, X, T, 2.0, 0.0)
        assert with_reg == pytest.approx(base, abs=1e-12)

    @pytest.mark.parametrize("hidden", [0, 5])
    @pytest.mark.parametrize("weights", [(0.0, 0.0), (0.7, 0.0), (0.0, 0.3), (0.5, 0.2)])
    def test_gradients_match_finite_differences(self, hidden, weights):
        rng = np.random.default_rng(hash((hidden, weights)) % (1 << 31))
        w_reg, w_ne = weights
        for _ in range(3):
            model, X, T = random_case(rng, hidden)
            _, analytic = trainer.loss_and_gradient(model, X, T, w_reg, w_ne)
            numeric = finite_difference_grads(model, X, T, w_reg, w_ne)
            for key in analytic:
                np.testing.assert_allclose(
                    analytic[key], numeric[key], rtol=1e-4, atol=1e-8
                )


class TestSharpen:
    def test_uniform_fixed_point(self):
        p = np.full((1, 4), 0.25)
        for T in (0.5, 1.0, 2.0):
            np.testing.assert_allclose(trainer.sharpen(p, T), p, atol=1e-12)

    def test_unit_temperature_identity(self):
        p = np.array([[0.7, 0.2, 0.1]])
        np.testing.assert_allclose(trainer.sharpen(p, 1.0), p, atol=1e-12)

    def test_half_temperature_value(self):
        out = trainer.sharpen(np.array([0.9, 0.1]), 0.5)
        np.testing.assert_allclose(out, [0.81 / 0.82, 0.01 / 0.82], rtol=1e-12)

    def test_nonpositive_temperature_rejected(self):
        with pytest.raises(InputError):
            trainer.sharpen(np.array([0.5, 0.5]), 0.0)


class TestCotrainPseudoLabel:
    def test_agreeing_one_hot_fixed_point(self):
        p = np.array([[0.0, 1.0]])
        for T in (0.5, 1.0, 3.0):
            np.testing.assert_allclose(trainer.cotrain_pseudo_label(p, p, T), p, atol=1e-12)

    def test_disagreeing_one_hot_averages(self):
        out = trainer.cotrain_pseudo_label(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]), 1.0)
        np.testing.assert_allclose(out, [[0.5, 0.5]], atol=1e-12)

    def test_sharpened_mean_value(self):
        out = trainer.cotrain_pseudo_label(
            np.array([[0.8, 0.2]]), np.array([[0.6, 0.4]]), 0.5
        )
        np.testing.assert_allclose(out, [[0.49 / 0.58, 0.09 / 0.58]], rtol=1e-12)


class TestRefurbish:
    def test_full_trust_keeps_given_label(self):
        given = np.array([[1.0, 0.0]])
        pseudo = np.array([[0.2, 0.8]])
        np.testing.assert_array_equal(trainer.refurbish([1.0], given, pseudo), given)

    def test_zero_trust_uses_pseudo(self):
        given = np.array([[1.0, 0.0]])
        pseudo = np.array([[0.2, 0.8]])
        np.testing.assert_array_equal(trainer.refurbish([0.0], given, pseudo), pseudo)

    def test_half_mix(self):
        out = trainer.refurbish([0.5], np.array([[1.0, 0.0]]), np.array([[0.2, 0.8]]))
        np.testing.assert_allclose(out, [[0.6, 0.4]], atol=1e-12)

    def test_rows_stay_stochastic(self):
        rng = np.random.default_rng(6)
        given = np.eye(4)[rng.integers(0, 4, 20)]
        pseudo = rng.random((20, 4))
        pseudo /= pseudo.sum(axis=1, keepdims=True)
        out = trainer.refurbish(rng.random(20), given, pseudo)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)
        assert out.min() >= 0.0

    def test_confidence_range_checked(self):
        with pytest.raises(InputError):
            trainer.refurbish([1.5], np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]]))


def small_setup(noise_rate=0.3, n=120, test_n=60, seed=3):
    blobs = corpus.make_gaussian_blobs(n + test_n, 3, 6, 7.0, 1.0, seed=seed)
    train, test = corpus.split_dataset(blobs, n, seed=seed + 1)
    if noise_rate > 0:
        train = corpus.inject_symmetric(train, noise_rate, seed=seed + 2)
    return train, test


class TestRunPipeline:
    def _config(self, **overrides):
        base = dict(
            rounds=4,
            warmup_rounds=2,
            iters_per_round=10,
            batch_size=32,
            learning_rate=0.2,
            k=8,
            mu=1.0,
            hidden=8,
            seed=11,
        )
        base.update(overrides)
        return trainer.TrainConfig(**base)

    def test_metric_traces_are_deterministic(self):
        train, test = small_setup()
        test_labels = test.true_labels_for_eval()
        a = trainer.run_pipeline(train, test.features, test_labels, self._config())
        b = trainer.run_pipeline(train, test.features, test_labels, self._config())
        assert json.dumps(a.records, sort_keys=True) == json.dumps(b.records, sort_keys=True)
        assert a.final == b.final

    def test_warmup_only_never_refurbishes(self):
        train, test = small_setup()
        config = self._config(rounds=3, warmup_rounds=3)
        result = trainer.run_pipeline(train, test.features, test.true_labels_for_eval(), config)
        assert all(record["phase"] == "warmup" for record in result.records)
        assert all(record["noise_f1"] is None for record in result.records)

    def test_warmup_records_match_plain_supervised_prefix(self):
        # the warm-up phase of a full run is byte-identical to a pure
        # supervised run of the same length
        train, test = small_setup()
        test_labels = test.true_labels_for_eval()
        full = trainer.run_pipeline(
            train, test.features, test_labels, self._config(rounds=4, warmup_rounds=2)
        )
        plain = trainer.run_pipeline(
            train, test.features, test_labels, self._config(rounds=2, warmup_rounds=2)
        )
        assert full.records[:4] == plain.records

    def test_refurbish_rounds_record_confidence_metrics(self):
        train, test = small_setup()
        result = trainer.run_pipeline(
            train, test.features, test.true_labels_for_eval(), self._config()
        )
        refurb = [r for r in result.records if r["phase"] == "refurbish"]
        assert refurb, "expected refurbishment rounds"
        for record in refurb:
            assert 0.0 <= record["noise_f1"] <= 1.0
            assert record["mean_confidence_clean"] is not None

    def test_models_initialized_differently(self):
        train, test = small_setup()
        result = trainer.run_pipeline(
            train, test.features, test.true_labels_for_eval(), self._config(rounds=1, warmup_rounds=1)
        )
        m0, m1 = result.models
        assert not np.allclose(m0.params["W1"], m1.params["W1"])

    def test_invalid_config_rejected(self):
        with pytest.raises(InputError):
            trainer.TrainConfig(rounds=2, warmup_rounds=3)
        with pytest.raises(InputError):
            trainer.TrainConfig(rounds=2, warmup_rounds=1, temperature=0.0)
