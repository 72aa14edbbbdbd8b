"""Supervised autoencoder: loss oracle, gradient checks, training contract."""

import math

import numpy as np
import pytest

from mi_pipeline.errors import ConfigError, DataError
from mi_pipeline.sae import (
    NetworkConfig,
    SaeParams,
    TrainConfig,
    classifier_gradients,
    classifier_objective,
    classify,
    composite_loss,
    decode,
    encode,
    fit_standardizer,
    gradients,
    init_params,
    load_checkpoint,
    loss_components,
    params_to_vector,
    predict,
    predict_proba,
    save_checkpoint,
    standardize,
    train,
    vector_to_params,
)

TINY = NetworkConfig(input_dim=2, ae_nodes=(1,), clf_nodes=(1,))
# Canonical vector layout for TINY: enc W (2), enc b (1), dec W (2),
# dec b (2), clf W (1), clf b (1).
TINY_VEC = np.array([0.5, -0.4, 0.1, 0.7, -0.3, 0.05, 0.2, 1.2, -0.1])


def blobs(n_per=40, dim=6, seed=5, sep=2.0):
    rng = np.random.default_rng(seed)
    x = np.vstack(
        [rng.standard_normal((n_per, dim)) + sep, rng.standard_normal((n_per, dim)) - sep]
    )
    y = np.array([0] * n_per + [1] * n_per)
    return x, y


class TestNetworkConfig:
    def test_layer_shapes(self):
        cfg = NetworkConfig(input_dim=6, ae_nodes=(5, 3, 5), clf_nodes=(4, 1))
        enc, dec, clf = cfg.layer_shapes()
        assert enc == [(6, 5), (5, 3)]
        assert dec == [(3, 5), (5, 6)]
        assert clf == [(3, 4), (4, 1)]
        assert cfg.code_dim == 3

    def test_parameter_count(self):
        cfg = NetworkConfig(input_dim=6, ae_nodes=(5, 3, 5), clf_nodes=(4, 1))
        # (6*5+5) + (5*3+3) + (3*5+5) + (5*6+6) + (3*4+4) + (4*1+1)
        assert cfg.n_params == 35 + 18 + 20 + 36 + 16 + 5

    def test_rejects_non_palindrome(self):
        with pytest.raises(ConfigError, match="palindromic"):
            NetworkConfig(input_dim=10, ae_nodes=(5, 3, 4), clf_nodes=(1,))

    def test_rejects_even_length(self):
        with pytest.raises(ConfigError, match="odd length"):
            NetworkConfig(input_dim=10, ae_nodes=(5, 5), clf_nodes=(1,))

    def test_rejects_wide_code(self):
        with pytest.raises(ConfigError, match="smaller than"):
            NetworkConfig(input_dim=3, ae_nodes=(4, 3, 4), clf_nodes=(1,))

    def test_rejects_bad_classifier_head(self):
        with pytest.raises(ConfigError, match="single output unit"):
            NetworkConfig(input_dim=10, ae_nodes=(5, 3, 5), clf_nodes=(4, 2))

    def test_rejects_nonpositive_widths(self):
        with pytest.raises(ConfigError, match="positive"):
            NetworkConfig(input_dim=10, ae_nodes=(5, 0, 5), clf_nodes=(1,))


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.alpha, cfg.beta) == (1.0, 1.0)
        assert (cfg.l1, cfg.l2) == (0.0001, 0.0001)
        assert (cfg.lr, cfg.batch) == (0.01, 32)
        assert (cfg.joint_epochs, cfg.clf_epochs) == (50, 150)
        assert cfg.total_epochs == 200

    def test_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(alpha=-0.1)
        with pytest.raises(ConfigError, match="both"):
            TrainConfig(alpha=0.0, beta=0.0)
        with pytest.raises(ConfigError, match="lr"):
            TrainConfig(lr=0.0)
        with pytest.raises(ConfigError, match="batch"):
            TrainConfig(batch=0)
        with pytest.raises(ConfigError):
            TrainConfig(l1=-1e-4)


class TestInitialization:
    def test_glorot_bounds_and_zero_biases(self):
        cfg = NetworkConfig(input_dim=8, ae_nodes=(6, 4, 6), clf_nodes=(3, 1))
        params = init_params(cfg, seed=0)
        for layers, shapes in zip(
            (params.encoder, params.decoder, params.classifier), cfg.layer_shapes()
        ):
            for (w, b), (fin, fout) in zip(layers, shapes):
                assert w.shape == (fin, fout)
                limit = math.sqrt(6.0 / (fin + fout))
                assert np.abs(w).max() <= limit
                np.testing.assert_array_equal(b, np.zeros(fout))

    def test_deterministic_per_seed(self):
        cfg = NetworkConfig(input_dim=8, ae_nodes=(4, 2, 4), clf_nodes=(1,))
        a = params_to_vector(init_params(cfg, seed=3))
        b = params_to_vector(init_params(cfg, seed=3))
        c = params_to_vector(init_params(cfg, seed=4))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)


class TestForwardPass:
    def test_zero_weights_give_half_probability(self):
        params = vector_to_params(TINY, np.zeros(TINY.n_params))
        x = np.array([[0.4, -1.2], [2.0, 0.3]])
        p = classify(params, encode(params, x))
        np.testing.assert_array_equal(p, [0.5, 0.5])
        np.testing.assert_array_equal(decode(params, encode(params, x)), np.zeros((2, 2)))

    def test_probability_strictly_inside_unit_interval(self):
        big = vector_to_params(TINY, np.full(TINY.n_params, 50.0))
        x = np.array([[100.0, 100.0], [-100.0, -100.0]])
        p = classify(big, encode(big, x))
        assert ((p > 0.0) & (p < 1.0)).all()

    def test_single_vector_gives_scalar(self):
        params = init_params(TINY, seed=0)
        p = classify(params, encode(params, np.array([0.1, 0.2])))
        assert isinstance(p, float)

    def test_encode_checks_width(self):
        params = init_params(TINY, seed=0)
        with pytest.raises(DataError, match="expected 2 input features"):
            encode(params, np.zeros((3, 5)))


class TestLossOracle:
    def test_hand_computed_single_sample(self):
        # Independent arithmetic for the 2-1-2 network with a 1-unit head.
        params = vector_to_params(TINY, TINY_VEC)
        cfg = TrainConfig(alpha=0.8, beta=1.3, l1=0.01, l2=0.02, joint_epochs=1, clf_epochs=0)
        x1, x2, y = 0.3, -0.2, 1.0

        code = math.tanh(0.5 * x1 + (-0.4) * x2 + 0.1)
        xhat1 = code * 0.7 + 0.05
        xhat2 = code * (-0.3) + 0.2
        p = 1.0 / (1.0 + math.exp(-(code * 1.2 - 0.1)))
        classification = 0.8 * -math.log(p)
        reconstruction = 1.3 * ((xhat1 - x1) ** 2 + (xhat2 - x2) ** 2) / 2.0
        weights = [0.5, -0.4, 0.7, -0.3, 1.2]
        reg = 0.01 * sum(abs(w) for w in weights) + 0.02 * sum(w * w for w in weights)

        comps = loss_components(params, np.array([[x1, x2]]), np.array([y]), cfg)
        assert comps.classification == pytest.approx(classification, abs=1e-12)
        assert comps.reconstruction == pytest.approx(reconstruction, abs=1e-12)
        assert comps.regularization == pytest.approx(reg, abs=1e-12)
        assert comps.total == pytest.approx(
            classification + reconstruction + reg, abs=1e-12
        )

    def test_batch_loss_averages_samples(self):
        params = vector_to_params(TINY, TINY_VEC)
        cfg = TrainConfig(alpha=0.7, beta=0.9, l1=0.0, l2=0.0)
        xa, xb = np.array([[0.3, -0.2]]), np.array([[-1.0, 0.5]])
        la = loss_components(params, xa, np.array([1]), cfg)
        lb = loss_components(params, xb, np.array([0]), cfg)
        both = loss_components(
            params, np.vstack([xa, xb]), np.array([1, 0]), cfg
        )
        assert both.classification == pytest.approx(
            (la.classification + lb.classification) / 2.0, abs=1e-12
        )
        assert both.reconstruction == pytest.approx(
            (la.reconstruction + lb.reconstruction) / 2.0, abs=1e-12
        )

    def test_zero_weights_classification_is_log_two(self):
        params = vector_to_params(TINY, np.zeros(TINY.n_params))
        cfg = TrainConfig(alpha=2.0, beta=1.0, l1=0.0, l2=0.0)
        comps = loss_components(
            params, np.array([[0.1, 0.2], [0.5, -0.3]]), np.array([0, 1]), cfg
        )
        assert comps.classification == pytest.approx(2.0 * math.log(2.0), abs=1e-12)
        assert comps.regularization == 0.0

    def test_rejects_empty_batch(self):
        params = init_params(TINY, seed=0)
        with pytest.raises(DataError, match="empty batch"):
            composite_loss(params, np.zeros((0, 2)), np.zeros(0), TrainConfig())


def numeric_gradient(f, vec, indices=None, h=1e-5):
    indices = range(len(vec)) if indices is None else indices
    grad = np.zeros_like(vec)
    for i in indices:
        up, down = vec.copy(), vec.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (f(up) - f(down)) / (2.0 * h)
    return grad


def relative_error(analytic, numeric):
    scale = np.maximum(np.abs(numeric), 1e-8)
    return np.max(np.abs(analytic - numeric) / scale)


class TestGradients:
    CONFIGS = [
        (NetworkConfig(2, (1,), (1,)), 0),
        (NetworkConfig(5, (4, 2, 4), (3, 1)), 1),
        (NetworkConfig(7, (5, 3, 5), (4, 2, 1)), 2),
    ]

    @pytest.mark.parametrize("net,seed", CONFIGS)
    def test_composite_gradient_matches_finite_differences(self, net, seed):
        rng = np.random.default_rng(100 + seed)
        x = rng.standard_normal((6, net.input_dim))
        y = rng.integers(0, 2, size=6).astype(float)
        cfg = TrainConfig(alpha=0.9, beta=1.1, l1=0.0003, l2=0.0007)
        vec = params_to_vector(init_params(net, seed=seed))

        analytic = params_to_vector(
            gradients(vector_to_params(net, vec), x, y, cfg)
        )
        numeric = numeric_gradient(
            lambda v: composite_loss(vector_to_params(net, v), x, y, cfg), vec
        )
        assert relative_error(analytic, numeric) < 1e-6

    @pytest.mark.parametrize("net,seed", CONFIGS)
    def test_classifier_gradient_matches_finite_differences(self, net, seed):
        rng = np.random.default_rng(200 + seed)
        x = rng.standard_normal((6, net.input_dim))
        y = rng.integers(0, 2, size=6).astype(float)
        cfg = TrainConfig(alpha=1.3, beta=0.8, l1=0.0002, l2=0.0005)
        vec = params_to_vector(init_params(net, seed=seed))

        clf_grads = classifier_gradients(vector_to_params(net, vec), x, y, cfg)
        analytic = np.concatenate(
            [np.concatenate([w.ravel(), b]) for w, b in clf_grads]
        )
        # Only classifier coordinates move in phase 2.
        enc, dec, _ = NetworkConfig(net.input_dim, net.ae_nodes, (1,)).layer_shapes()
        n_frozen = sum(fin * fout + fout for fin, fout in enc + dec)
        numeric_full = numeric_gradient(
            lambda v: classifier_objective(vector_to_params(net, v), x, y, cfg),
            vec,
            indices=range(n_frozen, len(vec)),
        )
        assert relative_error(analytic, numeric_full[n_frozen:]) < 1e-6

    def test_gradient_of_frozen_subnets_is_zero_in_phase_two(self):
        # The phase-2 objective must not depend on encoder or decoder moves
        # being applied; sanity-check the split used above.
        net = NetworkConfig(5, (4, 2, 4), (3, 1))
        enc, dec, _ = net.layer_shapes()
        n_frozen = sum(fin * fout + fout for fin, fout in enc + dec)
        assert n_frozen + sum(
            fin * fout + fout for fin, fout in net.layer_shapes()[2]
        ) == net.n_params


class TestStandardizer:
    def test_zero_mean_unit_std(self, rng):
        x = rng.standard_normal((50, 4)) * 3.0 + 1.0
        stats = fit_standardizer(x)
        z = standardize(stats, x)
        np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-12)

    def test_constant_column_is_left_finite(self):
        x = np.column_stack([np.full(10, 3.0), np.arange(10.0)])
        stats = fit_standardizer(x)
        assert stats.std[0] == 1.0
        z = standardize(stats, x)
        np.testing.assert_array_equal(z[:, 0], np.zeros(10))


TRAIN_NET = NetworkConfig(input_dim=6, ae_nodes=(4, 3, 4), clf_nodes=(3, 1))
TRAIN_CFG = TrainConfig(joint_epochs=20, clf_epochs=40, batch=16, seed=3)


@pytest.fixture(scope="module")
def fitted():
    x, y = blobs()
    return train(x, y, TRAIN_NET, TRAIN_CFG), x, y


class TestTraining:
    NET = TRAIN_NET
    CFG = TRAIN_CFG

    def test_log_shape_and_epoch_column(self, fitted):
        model, _, _ = fitted
        assert model.log.shape == (60, 5)
        np.testing.assert_array_equal(model.log[:, 0], np.arange(1, 61))
        assert np.isfinite(model.log).all()

    def test_training_reduces_loss(self, fitted):
        model, _, _ = fitted
        total = model.log[:, 1]
        assert total[-20:].mean() < total[:20].mean()

    def test_separable_data_is_learned(self, fitted):
        model, x, y = fitted
        pred = predict(model.params, model.stats, x)
        assert np.mean(pred == y) >= 0.9
        p = predict_proba(model.params, model.stats, x)
        agree = np.mean((p > 0.5) == (y == 1))
        assert agree >= 0.95

    def test_deterministic(self, fitted):
        model, x, y = fitted
        again = train(x, y, self.NET, self.CFG)
        np.testing.assert_array_equal(
            params_to_vector(model.params), params_to_vector(again.params)
        )
        np.testing.assert_array_equal(model.log, again.log)

    def test_phase_two_freezes_autoencoder(self):
        # A run whose second phase is dropped must leave the encoder and
        # decoder byte-identical to the full run: phase 2 never touches them.
        x, y = blobs()
        joint_only = TrainConfig(joint_epochs=20, clf_epochs=0, batch=16, seed=3)
        a = train(x, y, self.NET, joint_only)
        b = train(x, y, self.NET, self.CFG)
        for (wa, ba), (wb, bb) in zip(a.params.encoder, b.params.encoder):
            assert wa.tobytes() == wb.tobytes()
            assert ba.tobytes() == bb.tobytes()
        for (wa, ba), (wb, bb) in zip(a.params.decoder, b.params.decoder):
            assert wa.tobytes() == wb.tobytes()
        assert not np.array_equal(a.params.classifier[0][0], b.params.classifier[0][0])

    def test_rejects_single_class(self):
        x, _ = blobs()
        with pytest.raises(DataError, match="single class"):
            train(x, np.zeros(len(x)), self.NET, self.CFG)

    def test_rejects_wrong_width(self):
        x, y = blobs(dim=5)
        with pytest.raises(DataError, match="expects 6 features"):
            train(x, y, self.NET, self.CFG)

    def test_rejects_non_finite(self):
        x, y = blobs()
        x[0, 0] = np.nan
        with pytest.raises(DataError, match="non-finite"):
            train(x, y, self.NET, self.CFG)

    def test_rejects_bad_labels(self):
        x, y = blobs()
        y = y.astype(float)
        y[0] = 0.5
        with pytest.raises(DataError, match="labels must be 0 or 1"):
            train(x, y, self.NET, self.CFG)


class TestVectorRoundTrip:
    def test_round_trip_identity(self, rng):
        net = NetworkConfig(7, (5, 3, 5), (4, 1))
        vec = rng.standard_normal(net.n_params)
        np.testing.assert_array_equal(
            params_to_vector(vector_to_params(net, vec)), vec
        )

    def test_rejects_wrong_length(self):
        with pytest.raises(DataError, match="parameter values"):
            vector_to_params(TINY, np.zeros(TINY.n_params + 1))


class TestCheckpoints:
    def make_model(self):
        x, y = blobs(n_per=20)
        cfg = TrainConfig(joint_epochs=5, clf_epochs=5, batch=10, seed=1)
        return train(x, y, TestTraining.NET, cfg)

    def test_round_trip(self, tmp_path):
        model = self.make_model()
        path = tmp_path / "model.bin"
        save_checkpoint(model, path)
        back = load_checkpoint(path)
        assert back.config == model.config
        assert back.train_config == model.train_config
        np.testing.assert_array_equal(
            params_to_vector(back.params), params_to_vector(model.params)
        )
        np.testing.assert_array_equal(back.stats.mean, model.stats.mean)
        np.testing.assert_array_equal(back.stats.std, model.stats.std)
        np.testing.assert_array_equal(back.log, model.log)

    def test_identical_runs_identical_bytes(self, tmp_path):
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        save_checkpoint(self.make_model(), p1)
        save_checkpoint(self.make_model(), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "model.bin"
        save_checkpoint(self.make_model(), path)
        raw = bytearray(path.read_bytes())
        raw[0] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(DataError, match="bad magic"):
            load_checkpoint(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "model.bin"
        save_checkpoint(self.make_model(), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-16])
        with pytest.raises(DataError, match="payload"):
            load_checkpoint(path)
