"""Binary interchange format for studies.

A study directory holds ``manifest.json`` plus one little-endian binary file
per subject and session:

    header: magic ``MIT1`` | u32 n_trials | u32 n_channels | u32 n_samples | f64 fs
    per trial: u8 label (0=Left, 1=Right) | f64 samples, row-major channels x samples

All trials within a session file share the same shape. Round-trips are
bit-exact, which the CLI relies on for byte-identical reruns. Recordings in
vendor formats must be converted to this layout (and epoched to the analysis
window) before ingestion.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Label, StudyDataset, SubjectDataset, Trial
from .errors import DataError

MAGIC = b"MIT1"
MANIFEST_NAME = "manifest.json"
_HEADER = struct.Struct("<4sIIId")


def write_session(path: Path | str, trials: Sequence[Trial]) -> None:
    """Write one session's trials to a binary session file."""
    if not trials:
        raise DataError(f"refusing to write empty session file {path}")
    c, t, fs = trials[0].n_channels, trials[0].n_samples, trials[0].fs
    for tr in trials:
        if tr.n_channels != c or tr.n_samples != t:
            raise DataError(
                f"session trials must share one shape; got {tr.samples.shape} "
                f"and {(c, t)}"
            )
        if tr.fs != fs:
            raise DataError(f"sampling rate mismatch within session ({tr.fs} vs {fs})")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, len(trials), c, t, fs))
        for tr in trials:
            fh.write(struct.pack("<B", int(tr.label)))
            fh.write(np.ascontiguousarray(tr.samples, dtype="<f8").tobytes())


def read_session(path: Path | str, subject_id: int) -> list[Trial]:
    """Read a binary session file back into trials."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, n_trials, c, t, fs = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if n_trials == 0:
        raise DataError(f"{path}: no trials")
    trial_bytes = 1 + 8 * c * t
    expected = _HEADER.size + n_trials * trial_bytes
    if len(raw) != expected:
        raise DataError(
            f"{path}: dimension mismatch, file is {len(raw)} bytes but header "
            f"implies {expected}"
        )
    trials = []
    off = _HEADER.size
    for _ in range(n_trials):
        label_byte = raw[off]
        if label_byte not in (0, 1):
            raise DataError(f"{path}: unknown label {label_byte}")
        samples = np.frombuffer(
            raw, dtype="<f8", count=c * t, offset=off + 1
        ).reshape(c, t)
        trials.append(
            Trial(samples=samples, label=Label(label_byte), subject_id=subject_id, fs=fs)
        )
        off += trial_bytes
    return trials


def _session_name(subject_id: int, session: str) -> str:
    return f"s{subject_id:02d}_{session}.bin"


def save_study(study: StudyDataset, out_dir: Path | str) -> Path:
    """Write a study to ``out_dir`` in the interchange format.

    Returns the manifest path. Output bytes depend only on the study
    contents, so identical studies produce identical files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for subj in study.subjects:
        train_name = _session_name(subj.subject_id, "train")
        test_name = _session_name(subj.subject_id, "test")
        write_session(out_dir / train_name, subj.train_trials)
        write_session(out_dir / test_name, subj.test_trials)
        entries.append({"id": subj.subject_id, "train": train_name, "test": test_name})
    manifest = {"format": MAGIC.decode(), "version": 1, "subjects": entries}
    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def load_study(manifest_path: Path | str) -> StudyDataset:
    """Load and validate a study from a manifest (or its directory)."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DataError(f"missing file: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{manifest_path}: invalid JSON ({exc})") from exc
    if manifest.get("format") != MAGIC.decode():
        raise DataError(f"{manifest_path}: unsupported format {manifest.get('format')!r}")
    entries = manifest.get("subjects")
    if not entries:
        raise DataError(f"{manifest_path}: manifest lists no subjects")
    base = manifest_path.parent
    subjects = []
    for entry in entries:
        try:
            subject_id = int(entry["id"])
            train_file, test_file = entry["train"], entry["test"]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{manifest_path}: malformed subject entry {entry!r}") from exc
        subjects.append(
            SubjectDataset(
                subject_id=subject_id,
                train_trials=read_session(base / train_file, subject_id),
                test_trials=read_session(base / test_file, subject_id),
            )
        )
    return StudyDataset(subjects=subjects)
