"""Synthetic multi-subject motor-imagery study generator.

Each subject mixes latent sources into channels through an orthogonal
matrix. Two rhythm sources carry the class signal: band-limited noise
around 8-13 Hz whose gain drops on the side matching the imagined hand,
mirroring event-related desynchronization. Remaining sources are broadband
background. Class membership therefore shows up only in the spatial
covariance structure, which is exactly what the spatial-filter pipeline
is built to recover.

Subject variability has two knobs: a random rotation of the mixing matrix
with a fixed angle (``perturbation_rad``) and a uniform shift of the rhythm
band (``band_shift_hz``). Both at zero, every subject is statistically
identical and transfer across subjects is easy; raising them makes the
leave-one-subject-out problem genuinely hard.

Generation is bit-deterministic for a given (spec, seed): the seed is split
into one stream for the shared mixing basis plus independent streams per
subject, so changing the subject count never reshuffles existing subjects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .data import MIN_SAMPLING_RATE_HZ, Label, StudyDataset, SubjectDataset, Trial
from .dsp import SosFilter, butterworth_bandpass_sos, filter_array
from .errors import ConfigError

RHYTHM_LOW_HZ = 8.0
RHYTHM_HIGH_HZ = 13.0
BACKGROUND_LOW_HZ = 4.0
BACKGROUND_HIGH_HZ = 30.0

# Amplitude gains chosen so a 2-channel study has trace-normalized class
# covariances near diag(0.8, 0.2) / diag(0.2, 0.8): 1.0^2 : 0.5^2 = 4 : 1.
ACTIVE_GAIN = 1.0
SUPPRESSED_GAIN = 0.5
BACKGROUND_GAIN = 0.5


@dataclass(frozen=True, eq=False)
class SynthSpec:
    """Recipe for one synthetic study."""

    n_subjects: int = 9
    n_channels: int = 8
    trials_per_class: int = 60
    fs: float = 250.0
    trial_seconds: float = 2.0
    perturbation_rad: float = 0.0
    band_shift_hz: float = 0.0
    noise_level: float = 0.1
    mixing_left: np.ndarray | None = None
    mixing_right: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.n_subjects < 1:
            raise ConfigError(f"need at least 1 subject, got {self.n_subjects}")
        if self.n_channels < 2:
            raise ConfigError(f"need at least 2 channels, got {self.n_channels}")
        if self.trials_per_class < 1:
            raise ConfigError(
                f"need at least 1 trial per class, got {self.trials_per_class}"
            )
        if self.fs < MIN_SAMPLING_RATE_HZ:
            raise ConfigError(
                f"sampling rate {self.fs} below minimum {MIN_SAMPLING_RATE_HZ}"
            )
        if self.trial_seconds <= 0.0:
            raise ConfigError("trial_seconds must be positive")
        if self.perturbation_rad < 0.0 or self.band_shift_hz < 0.0:
            raise ConfigError("perturbation_rad and band_shift_hz must be >= 0")
        if RHYTHM_HIGH_HZ + self.band_shift_hz >= self.fs / 2:
            raise ConfigError("shifted rhythm band would cross Nyquist")
        if self.noise_level < 0.0:
            raise ConfigError("noise_level must be >= 0")
        for name in ("mixing_left", "mixing_right"):
            mat = getattr(self, name)
            if mat is None:
                continue
            arr = np.ascontiguousarray(np.asarray(mat, dtype=np.float64))
            if arr.shape != (self.n_channels, self.n_channels):
                raise ConfigError(
                    f"{name} must have shape "
                    f"({self.n_channels}, {self.n_channels}), got {arr.shape}"
                )
            if not np.isfinite(arr).all():
                raise ConfigError(f"{name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if (self.mixing_left is None) != (self.mixing_right is None):
            raise ConfigError("provide both class mixings or neither")

    @property
    def n_samples(self) -> int:
        return int(np.floor(self.trial_seconds * self.fs + 0.5))


def _orthonormal_basis(rng: np.random.Generator, n: int) -> np.ndarray:
    """Haar-ish random orthogonal matrix, sign-fixed so it is canonical."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _random_rotation(rng: np.random.Generator, n: int, angle_rad: float) -> np.ndarray:
    """Orthogonal matrix rotating by at most ``angle_rad`` in any plane."""
    m = rng.standard_normal((n, n))
    skew = (m - m.T) / 2.0
    scale = np.linalg.norm(skew, 2)
    if angle_rad == 0.0 or scale == 0.0:
        return np.eye(n)
    return expm(skew * (angle_rad / scale))


def _class_gains(spec: SynthSpec) -> dict[Label, np.ndarray]:
    """Per-source gains; the side matching the imagined hand is suppressed."""
    base = np.full(spec.n_channels, BACKGROUND_GAIN)
    left = base.copy()
    left[0], left[1] = SUPPRESSED_GAIN, ACTIVE_GAIN
    right = base.copy()
    right[0], right[1] = ACTIVE_GAIN, SUPPRESSED_GAIN
    return {Label.LEFT: left, Label.RIGHT: right}


def _banded_source(
    rng: np.random.Generator, filt: SosFilter, n_samples: int, warmup: int
) -> np.ndarray:
    """Unit-std band-limited noise; the filter transient is discarded."""
    raw = filter_array(filt, rng.standard_normal(n_samples + warmup))[warmup:]
    std = raw.std()
    return raw / std if std > 0.0 else raw


def _session(
    rng: np.random.Generator,
    spec: SynthSpec,
    mixings: dict[Label, np.ndarray],
    rhythm_filt: SosFilter,
    background_filt: SosFilter,
    subject_id: int,
) -> tuple[Trial, ...]:
    n_samples = spec.n_samples
    warmup = int(spec.fs)
    labels = [Label.LEFT] * spec.trials_per_class + [Label.RIGHT] * spec.trials_per_class
    trials = []
    for label in labels:
        sources = np.empty((spec.n_channels, n_samples))
        sources[0] = _banded_source(rng, rhythm_filt, n_samples, warmup)
        sources[1] = _banded_source(rng, rhythm_filt, n_samples, warmup)
        for ch in range(2, spec.n_channels):
            sources[ch] = _banded_source(rng, background_filt, n_samples, warmup)
        samples = mixings[label] @ sources
        if spec.noise_level > 0.0:
            samples = samples + spec.noise_level * rng.standard_normal(samples.shape)
        trials.append(
            Trial(samples=samples, label=label, subject_id=subject_id, fs=spec.fs)
        )
    return tuple(trials)


def synth_study(spec: SynthSpec, seed: int) -> StudyDataset:
    """Generate a full study of ``spec.n_subjects`` subjects from one seed."""
    root = np.random.SeedSequence(int(seed))
    global_ss, *subject_ss = root.spawn(1 + spec.n_subjects)

    global_rng = np.random.default_rng(global_ss)
    if spec.mixing_left is not None:
        base_mixings = {Label.LEFT: spec.mixing_left, Label.RIGHT: spec.mixing_right}
    else:
        basis = _orthonormal_basis(global_rng, spec.n_channels)
        gains = _class_gains(spec)
        base_mixings = {label: basis * gains[label] for label in gains}

    background_filt = butterworth_bandpass_sos(
        BACKGROUND_LOW_HZ, BACKGROUND_HIGH_HZ, spec.fs
    )

    subjects = []
    for idx, ss in enumerate(subject_ss):
        subject_id = idx + 1
        structure_ss, train_ss, test_ss = ss.spawn(3)
        structure_rng = np.random.default_rng(structure_ss)
        rotation = _random_rotation(
            structure_rng, spec.n_channels, spec.perturbation_rad
        )
        shift = (
            structure_rng.uniform(-spec.band_shift_hz, spec.band_shift_hz)
            if spec.band_shift_hz > 0.0
            else 0.0
        )
        mixings = {label: rotation @ mat for label, mat in base_mixings.items()}
        rhythm_filt = butterworth_bandpass_sos(
            RHYTHM_LOW_HZ + shift, RHYTHM_HIGH_HZ + shift, spec.fs
        )
        subjects.append(
            SubjectDataset(
                subject_id=subject_id,
                train_trials=_session(
                    np.random.default_rng(train_ss),
                    spec,
                    mixings,
                    rhythm_filt,
                    background_filt,
                    subject_id,
                ),
                test_trials=_session(
                    np.random.default_rng(test_ss),
                    spec,
                    mixings,
                    rhythm_filt,
                    background_filt,
                    subject_id,
                ),
            )
        )
    return StudyDataset(subjects=tuple(subjects))
