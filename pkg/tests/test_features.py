"""Bank covariance cache and fused feature assembly."""

import numpy as np
import pytest

from mi_pipeline.csp import (
    csp_features_from_covariance,
    fit_csp_from_covariances,
    fused_features_from_covariances,
    spatial_covariance,
)
from mi_pipeline.dsp import build_fbcsp_bank, design_butterworth_bandpass
from mi_pipeline.errors import DataError
from mi_pipeline.features import (
    bank_feature_matrix,
    compute_bank_covariances,
    fit_bank_csp,
    session_covariances,
    stack_train_sessions,
)


@pytest.fixture(scope="module")
def bank_covs(small_study):
    return compute_bank_covariances(small_study, build_fbcsp_bank())


class TestCache:
    def test_shapes(self, small_study, bank_covs):
        assert bank_covs.subject_ids == small_study.subject_ids
        assert bank_covs.n_channels == 4
        sess = bank_covs.train[1]
        assert sess.covariances.shape == (9, 24, 4, 4)
        assert sess.labels.shape == (24,)

    def test_unit_traces(self, bank_covs):
        covs = bank_covs.train[1].covariances
        traces = np.trace(covs, axis1=2, axis2=3)
        np.testing.assert_allclose(traces, 1.0, atol=1e-12)

    def test_matches_direct_computation(self, small_study, bank_covs):
        # The cache entry equals filtering one trial by hand.
        band = build_fbcsp_bank().bands[2]
        filt = design_butterworth_bandpass(band, small_study.fs)
        trial = small_study.subject(1).train_trials[5]
        from mi_pipeline.dsp import filter_array

        expected = spatial_covariance(filter_array(filt, trial.samples, axis=-1))
        np.testing.assert_allclose(
            bank_covs.train[1].covariances[2, 5], expected, atol=1e-12
        )

    def test_empty_trials_rejected(self):
        with pytest.raises(DataError, match="no trials"):
            session_covariances([], [], subject_id=1)


class TestPooling:
    def test_stack_orders_and_origins(self, bank_covs):
        pooled, labels, origins = stack_train_sessions(bank_covs, [2, 3])
        assert pooled.shape == (9, 48, 4, 4)
        assert labels.shape == (48,)
        np.testing.assert_array_equal(np.unique(origins), [2, 3])
        np.testing.assert_array_equal(origins[:24], np.full(24, 2))
        np.testing.assert_array_equal(origins[24:], np.full(24, 3))
        np.testing.assert_array_equal(pooled[:, :24], bank_covs.train[2].covariances)

    def test_unknown_subject_rejected(self, bank_covs):
        with pytest.raises(DataError, match="unknown subject ids"):
            stack_train_sessions(bank_covs, [1, 42])

    def test_empty_pool_rejected(self, bank_covs):
        with pytest.raises(DataError, match="no subjects"):
            stack_train_sessions(bank_covs, [])


class TestFeatureMatrix:
    def test_fused_width_is_bands_times_2m(self, bank_covs):
        pooled, labels, _ = stack_train_sessions(bank_covs, [1, 2, 3])
        models = fit_bank_csp(pooled, labels, m=2)
        assert len(models) == 9
        feats = bank_feature_matrix(models, pooled)
        assert feats.shape == (72, 9 * 4)
        assert np.isfinite(feats).all()

    def test_matches_single_trial_route(self, bank_covs):
        # The matrix route and the per-trial fused-feature route agree.
        pooled, labels, _ = stack_train_sessions(bank_covs, [1, 2])
        models = fit_bank_csp(pooled, labels, m=2)
        feats = bank_feature_matrix(models, pooled)
        trial7 = fused_features_from_covariances(models, pooled[:, 7])
        np.testing.assert_allclose(feats[7], trial7, atol=1e-12)

    def test_band_count_must_match(self, bank_covs):
        pooled, labels, _ = stack_train_sessions(bank_covs, [1])
        models = fit_bank_csp(pooled, labels, m=2)
        with pytest.raises(DataError, match="band stacks"):
            bank_feature_matrix(models[:5], pooled)

    def test_per_band_models_are_band_specific(self, bank_covs):
        pooled, labels, _ = stack_train_sessions(bank_covs, [1, 2, 3])
        models = fit_bank_csp(pooled, labels, m=2)
        # The rhythm band (8-12 Hz) separates classes; a control band far
        # from the rhythm should not separate them as sharply.
        rhythm = models[1]  # band [8, 12]
        assert rhythm.eigenvalues[0] - rhythm.eigenvalues[-1] > 0.05

    def test_log_share_features_are_negative(self, bank_covs):
        # Each entry is log of a proper fraction of the projected variance.
        pooled, labels, _ = stack_train_sessions(bank_covs, [1])
        models = fit_bank_csp(pooled, labels, m=2)
        feats = bank_feature_matrix(models, pooled)
        assert (feats < 0.0).all()

    def test_consistency_with_csp_module(self, bank_covs):
        pooled, labels, _ = stack_train_sessions(bank_covs, [1, 2])
        model = fit_csp_from_covariances(pooled[0], labels, m=2)
        direct = csp_features_from_covariance(model, pooled[0, 3])
        via_matrix = bank_feature_matrix((model,), pooled[:1])[3]
        np.testing.assert_allclose(via_matrix, direct, atol=1e-12)
