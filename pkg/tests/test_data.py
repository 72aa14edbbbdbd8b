"""Trial/dataset invariants and epoch extraction."""

import numpy as np
import pytest

from mi_pipeline.data import (
    MIN_SAMPLING_RATE_HZ,
    Label,
    StudyDataset,
    SubjectDataset,
    Trial,
    epoch_window,
    labels_of,
)
from mi_pipeline.errors import DataError


def make_trial(n_channels=3, n_samples=500, label=Label.LEFT, subject_id=1, fs=250.0):
    x = np.arange(n_channels * n_samples, dtype=np.float64).reshape(n_channels, n_samples)
    return Trial(samples=x, label=label, subject_id=subject_id, fs=fs)


class TestTrial:
    def test_basic_properties(self):
        t = make_trial(n_channels=3, n_samples=500, fs=250.0)
        assert t.n_channels == 3
        assert t.n_samples == 500
        assert t.duration == pytest.approx(2.0)
        assert t.samples.dtype == np.float64

    def test_samples_are_read_only(self):
        t = make_trial()
        with pytest.raises(ValueError):
            t.samples[0, 0] = 1.0

    def test_coerces_integer_input(self):
        t = Trial(samples=[[1, 2, 3], [4, 5, 6]], label=Label.RIGHT, subject_id=2)
        assert t.samples.dtype == np.float64
        assert t.label is Label.RIGHT

    def test_rejects_1d_samples(self):
        with pytest.raises(DataError, match="2-D"):
            Trial(samples=np.zeros(10), label=Label.LEFT, subject_id=1)

    def test_rejects_tiny_shapes(self):
        with pytest.raises(DataError, match="at least 2"):
            Trial(samples=np.zeros((1, 10)), label=Label.LEFT, subject_id=1)
        with pytest.raises(DataError, match="at least 2"):
            Trial(samples=np.zeros((3, 1)), label=Label.LEFT, subject_id=1)

    def test_rejects_non_finite(self):
        x = np.zeros((2, 10))
        x[1, 3] = np.nan
        with pytest.raises(DataError, match="non-finite"):
            Trial(samples=x, label=Label.LEFT, subject_id=1)

    def test_rejects_low_sampling_rate(self):
        with pytest.raises(DataError, match="too low"):
            make_trial(fs=MIN_SAMPLING_RATE_HZ - 1.0)

    def test_rejects_bad_subject_id(self):
        with pytest.raises(DataError, match="subject_id"):
            make_trial(subject_id=0)

    def test_with_samples_preserves_metadata(self):
        t = make_trial(label=Label.RIGHT, subject_id=5, fs=256.0)
        t2 = t.with_samples(np.ones((4, 8)))
        assert t2.label is Label.RIGHT
        assert t2.subject_id == 5
        assert t2.fs == 256.0
        assert t2.n_channels == 4


class TestEpochWindow:
    def test_half_open_interval(self):
        t = make_trial(n_samples=500, fs=250.0)
        w = epoch_window(t, 0.5, 1.5)
        # [round(0.5*250), round(1.5*250)) = [125, 375)
        assert w.n_samples == 250
        np.testing.assert_array_equal(w.samples, t.samples[:, 125:375])

    def test_round_half_up(self):
        t = make_trial(n_samples=500, fs=250.0)
        # 0.001*250 = 0.25 -> 0, 0.999*250 = 249.75 -> 250
        w = epoch_window(t, 0.001, 0.999)
        assert w.n_samples == 250

    def test_full_extent_allowed(self):
        t = make_trial(n_samples=500, fs=250.0)
        w = epoch_window(t, 0.0, 2.0)
        assert w.n_samples == 500

    def test_rejects_inverted_window(self):
        t = make_trial()
        with pytest.raises(DataError, match="invalid window"):
            epoch_window(t, 1.0, 0.5)
        with pytest.raises(DataError, match="invalid window"):
            epoch_window(t, -0.1, 0.5)

    def test_rejects_window_past_end(self):
        t = make_trial(n_samples=500, fs=250.0)
        with pytest.raises(DataError, match="outside trial extent"):
            epoch_window(t, 0.0, 2.5)

    def test_rejects_degenerate_window(self):
        t = make_trial(n_samples=500, fs=250.0)
        with pytest.raises(DataError, match="fewer than 2 samples"):
            epoch_window(t, 1.0, 1.002)

    def test_preserves_label(self):
        t = make_trial(label=Label.RIGHT)
        assert epoch_window(t, 0.0, 1.0).label is Label.RIGHT


class TestDatasets:
    def test_subject_dataset_checks_ids(self):
        good = make_trial(subject_id=1)
        bad = make_trial(subject_id=2)
        with pytest.raises(DataError, match="labelled subject 2"):
            SubjectDataset(subject_id=1, train_trials=(good, bad))

    def test_subject_dataset_checks_channels(self):
        a = make_trial(n_channels=3)
        b = make_trial(n_channels=4)
        with pytest.raises(DataError, match="channel count mismatch"):
            SubjectDataset(subject_id=1, train_trials=(a, b))

    def test_subject_dataset_checks_fs(self):
        a = make_trial(fs=250.0)
        b = make_trial(fs=256.0)
        with pytest.raises(DataError, match="sampling rate mismatch"):
            SubjectDataset(subject_id=1, train_trials=(a, b))

    def test_subject_dataset_rejects_empty(self):
        with pytest.raises(DataError, match="no trials"):
            SubjectDataset(subject_id=1)

    def test_study_rejects_duplicate_ids(self):
        s1 = SubjectDataset(subject_id=1, train_trials=(make_trial(subject_id=1),))
        s1b = SubjectDataset(subject_id=1, train_trials=(make_trial(subject_id=1),))
        with pytest.raises(DataError, match="duplicate"):
            StudyDataset(subjects=(s1, s1b))

    def test_study_lookup_and_others(self):
        subjects = tuple(
            SubjectDataset(subject_id=i, train_trials=(make_trial(subject_id=i),))
            for i in (1, 2, 3)
        )
        study = StudyDataset(subjects=subjects)
        assert study.subject_ids == (1, 2, 3)
        assert study.subject(2).subject_id == 2
        assert tuple(s.subject_id for s in study.others(2)) == (1, 3)
        with pytest.raises(DataError, match="no subject 9"):
            study.subject(9)

    def test_study_uniformity_checks(self):
        s1 = SubjectDataset(subject_id=1, train_trials=(make_trial(subject_id=1, n_channels=3),))
        s2 = SubjectDataset(subject_id=2, train_trials=(make_trial(subject_id=2, n_channels=4),))
        with pytest.raises(DataError, match="channel count mismatch"):
            StudyDataset(subjects=(s1, s2))

    def test_labels_of(self):
        trials = [make_trial(label=Label.LEFT), make_trial(label=Label.RIGHT)]
        np.testing.assert_array_equal(labels_of(trials), [0, 1])
        assert labels_of(trials).dtype == np.int64
