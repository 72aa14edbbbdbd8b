"""Core data model: trials, per-subject datasets, multi-subject studies.

A trial is one epoch of multichannel EEG (channels x samples) with a binary
class label. Trials are immutable after construction and therefore safe to
share across threads and worker processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterator, Sequence

import numpy as np

from .errors import DataError

# The analysis bank tops out at 40 Hz; anything at or below 2x that rate
# cannot represent the upper bands.
MIN_SAMPLING_RATE_HZ = 81.0
DEFAULT_SAMPLING_RATE_HZ = 250.0


class Label(IntEnum):
    """Binary motor-imagery class (matches the on-disk label byte)."""

    LEFT = 0
    RIGHT = 1


@dataclass(frozen=True, eq=False)
class Trial:
    """One epoch of multichannel EEG.

    Parameters
    ----------
    samples : (n_channels, n_samples) ndarray
        Amplitudes in microvolts, float64.
    label : Label
        Imagined-movement class.
    subject_id : int
        1-based subject identifier.
    fs : float
        Sampling rate in Hz, at least ``MIN_SAMPLING_RATE_HZ``.
    """

    samples: np.ndarray
    label: Label
    subject_id: int
    fs: float = DEFAULT_SAMPLING_RATE_HZ

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 2:
            raise DataError(
                f"trial samples must be 2-D (channels x samples), got shape {arr.shape}"
            )
        if arr.shape[0] < 2 or arr.shape[1] < 2:
            raise DataError(
                f"trial needs at least 2 channels and 2 samples, got shape {arr.shape}"
            )
        if not np.isfinite(arr).all():
            raise DataError("non-finite sample in trial")
        if not (self.fs >= MIN_SAMPLING_RATE_HZ):
            raise DataError(
                f"sampling rate {self.fs} Hz too low; need >= {MIN_SAMPLING_RATE_HZ} Hz"
            )
        if self.subject_id < 1:
            raise DataError(f"subject_id must be >= 1, got {self.subject_id}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "label", Label(self.label))
        object.__setattr__(self, "fs", float(self.fs))

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        """Trial length in seconds."""
        return self.n_samples / self.fs

    def with_samples(self, samples: np.ndarray) -> "Trial":
        """New trial with replaced samples, metadata preserved."""
        return Trial(samples=samples, label=self.label, subject_id=self.subject_id, fs=self.fs)


def epoch_window(trial: Trial, t_start: float, t_end: float) -> Trial:
    """Cut the sample window [t_start, t_end) seconds out of a trial.

    Indices are the half-open interval ``[round(t_start*fs), round(t_end*fs))``
    with round-half-up, so epoch lengths are reproducible across platforms.
    Label and metadata are preserved.
    """
    if not (0.0 <= t_start < t_end):
        raise DataError(f"invalid window ({t_start}, {t_end}): need 0 <= start < end")
    if t_end > trial.duration + 1e-9:
        raise DataError(
            f"window ({t_start}, {t_end}) outside trial extent of {trial.duration:.6g} s"
        )
    i0 = int(math.floor(t_start * trial.fs + 0.5))
    i1 = int(math.floor(t_end * trial.fs + 0.5))
    i1 = min(i1, trial.n_samples)
    if i1 - i0 < 2:
        raise DataError(f"window ({t_start}, {t_end}) spans fewer than 2 samples")
    return trial.with_samples(trial.samples[:, i0:i1])


@dataclass(frozen=True, eq=False)
class SubjectDataset:
    """Train- and test-session trials for one subject."""

    subject_id: int
    train_trials: tuple[Trial, ...] = field(default_factory=tuple)
    test_trials: tuple[Trial, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "train_trials", tuple(self.train_trials))
        object.__setattr__(self, "test_trials", tuple(self.test_trials))
        trials = self.train_trials + self.test_trials
        if not trials:
            raise DataError(f"subject {self.subject_id}: no trials")
        for t in trials:
            if t.subject_id != self.subject_id:
                raise DataError(
                    f"trial labelled subject {t.subject_id} inside dataset of "
                    f"subject {self.subject_id}"
                )
            if t.n_channels != trials[0].n_channels:
                raise DataError(
                    f"subject {self.subject_id}: channel count mismatch "
                    f"({t.n_channels} vs {trials[0].n_channels})"
                )
            if t.fs != trials[0].fs:
                raise DataError(
                    f"subject {self.subject_id}: sampling rate mismatch "
                    f"({t.fs} vs {trials[0].fs})"
                )

    @property
    def n_channels(self) -> int:
        return (self.train_trials + self.test_trials)[0].n_channels

    @property
    def fs(self) -> float:
        return (self.train_trials + self.test_trials)[0].fs


@dataclass(frozen=True, eq=False)
class StudyDataset:
    """A multi-subject study with uniform channel count and sampling rate."""

    subjects: tuple[SubjectDataset, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "subjects", tuple(self.subjects))
        if not self.subjects:
            raise DataError("study has no subjects")
        ids = [s.subject_id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate subject ids in study: {sorted(ids)}")
        first = self.subjects[0]
        for s in self.subjects:
            if s.n_channels != first.n_channels:
                raise DataError(
                    f"channel count mismatch across subjects "
                    f"({s.n_channels} vs {first.n_channels})"
                )
            if s.fs != first.fs:
                raise DataError(
                    f"sampling rate mismatch across subjects ({s.fs} vs {first.fs})"
                )

    @property
    def subject_ids(self) -> tuple[int, ...]:
        return tuple(s.subject_id for s in self.subjects)

    @property
    def n_channels(self) -> int:
        return self.subjects[0].n_channels

    @property
    def fs(self) -> float:
        return self.subjects[0].fs

    def subject(self, subject_id: int) -> SubjectDataset:
        for s in self.subjects:
            if s.subject_id == subject_id:
                return s
        raise DataError(f"no subject {subject_id} in study (have {self.subject_ids})")

    def others(self, subject_id: int) -> tuple[SubjectDataset, ...]:
        """All subjects except ``subject_id`` (which must exist)."""
        self.subject(subject_id)
        return tuple(s for s in self.subjects if s.subject_id != subject_id)

    def __iter__(self) -> Iterator[SubjectDataset]:
        return iter(self.subjects)


def labels_of(trials: Sequence[Trial]) -> np.ndarray:
    """Integer label vector for a trial sequence."""
    return np.array([int(t.label) for t in trials], dtype=np.int64)
