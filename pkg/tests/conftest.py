"""Shared fixtures: one small synthetic study reused across test modules."""

import numpy as np
import pytest

from mi_pipeline.synth import SynthSpec, synth_study

SMALL_STUDY_SEED = 7


@pytest.fixture(scope="session")
def small_study():
    """Four subjects, four channels, 12+12 trials, mild subject variability."""
    spec = SynthSpec(
        n_subjects=4,
        n_channels=4,
        trials_per_class=12,
        trial_seconds=1.0,
        perturbation_rad=0.05,
        band_shift_hz=0.5,
        noise_level=0.5,
    )
    return synth_study(spec, seed=SMALL_STUDY_SEED)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
