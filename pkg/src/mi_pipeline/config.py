"""Experiment configuration: one JSON document per run.

A config names exactly one data source (a study manifest on disk or a
synthetic-study recipe), a mandatory seed, and optional method/settings/
training overrides. Command-line flags may override seed, output directory
and bank; overrides re-resolve the document so derived defaults (like the
training seed following the global seed) stay consistent.

The run hash covers every field that affects results, with the output
directory deliberately excluded, so two runs writing to different places
still identify as the same experiment.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import BANK_BUILDERS
from .errors import ConfigError
from .evaluation import DEFAULT_NETWORK_SHAPES, METHOD_NAMES
from .sae import TrainConfig
from .synth import SynthSpec

_TOP_LEVEL_KEYS = {
    "seed",
    "study",
    "synth",
    "methods",
    "settings",
    "train",
    "m",
    "mibif_k",
    "bank",
    "out",
}
_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}
_SYNTH_KEYS = {f.name for f in dataclasses.fields(SynthSpec)}


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Fully resolved run description."""

    seed: int
    study_path: str | None
    synth: SynthSpec | None
    methods: tuple[str, ...]
    settings: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    train: TrainConfig
    m: int
    mibif_k: int
    bank: str
    out: str | None
    source: dict

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        out: str | None = None,
        bank: str | None = None,
    ) -> "ExperimentConfig":
        """Re-resolve the original document with command-line overrides."""
        return parse_experiment_config(self.source, seed=seed, out=out, bank=bank)

    def canonical(self) -> dict:
        """Result-affecting fields only, JSON-ready, for hashing and stamps."""
        synth = None
        if self.synth is not None:
            synth = {}
            for f in dataclasses.fields(SynthSpec):
                value = getattr(self.synth, f.name)
                if isinstance(value, np.ndarray):
                    value = value.tolist()
                synth[f.name] = value
        return {
            "seed": self.seed,
            "study": self.study_path,
            "synth": synth,
            "methods": list(self.methods),
            "settings": [[list(ae), list(clf)] for ae, clf in self.settings],
            "train": dataclasses.asdict(self.train),
            "m": self.m,
            "mibif_k": self.mibif_k,
            "bank": self.bank,
        }


def config_hash(config: ExperimentConfig) -> str:
    """sha256 over the canonical JSON form."""
    blob = json.dumps(config.canonical(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _require_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{what} must be an integer, got {value!r}")
    return value


def _parse_settings(raw) -> tuple:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("settings must be a nonempty list")
    settings = []
    for i, entry in enumerate(raw):
        if (
            not isinstance(entry, (list, tuple))
            or len(entry) != 2
            or not all(isinstance(part, (list, tuple)) for part in entry)
        ):
            raise ConfigError(
                f"settings[{i}] must be a pair [ae_nodes, clf_nodes], got {entry!r}"
            )
        ae, clf = entry
        settings.append(
            (
                tuple(_require_int(n, f"settings[{i}] ae node") for n in ae),
                tuple(_require_int(n, f"settings[{i}] clf node") for n in clf),
            )
        )
    return tuple(settings)


def _parse_synth(raw: dict) -> SynthSpec:
    if not isinstance(raw, dict):
        raise ConfigError("synth must be an object")
    unknown = set(raw) - _SYNTH_KEYS
    if unknown:
        raise ConfigError(f"unknown synth keys: {sorted(unknown)}")
    kwargs = dict(raw)
    for key in ("mixing_left", "mixing_right"):
        if kwargs.get(key) is not None:
            kwargs[key] = np.asarray(kwargs[key], dtype=np.float64)
    try:
        return SynthSpec(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad synth value: {exc}") from exc


def parse_experiment_config(
    doc: dict,
    *,
    seed: int | None = None,
    out: str | None = None,
    bank: str | None = None,
) -> ExperimentConfig:
    """Validate a parsed JSON document, applying optional flag overrides."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    sources = [k for k in ("study", "synth") if doc.get(k) is not None]
    if len(sources) != 1:
        raise ConfigError(
            f"exactly one data source required ('study' or 'synth'), got {sources}"
        )

    if seed is None:
        if "seed" not in doc:
            raise ConfigError("seed is mandatory (config 'seed' or --seed)")
        seed = _require_int(doc["seed"], "seed")
    else:
        seed = _require_int(seed, "seed")

    study_path = None
    synth = None
    if "study" in sources:
        if not isinstance(doc["study"], str):
            raise ConfigError("study must be a path string")
        study_path = doc["study"]
    else:
        synth = _parse_synth(doc["synth"])

    methods_raw = doc.get("methods", list(METHOD_NAMES))
    if not isinstance(methods_raw, list) or not methods_raw:
        raise ConfigError("methods must be a nonempty list")
    for method in methods_raw:
        if method not in METHOD_NAMES:
            raise ConfigError(
                f"unknown method {method!r}; expected subset of {METHOD_NAMES}"
            )
    if len(set(methods_raw)) != len(methods_raw):
        raise ConfigError("methods contains duplicates")
    methods = tuple(methods_raw)

    settings = (
        _parse_settings(doc["settings"])
        if "settings" in doc
        else DEFAULT_NETWORK_SHAPES
    )

    train_raw = doc.get("train", {})
    if not isinstance(train_raw, dict):
        raise ConfigError("train must be an object")
    unknown = set(train_raw) - _TRAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown train keys: {sorted(unknown)}")
    train_kwargs = dict(train_raw)
    train_kwargs.setdefault("seed", seed)
    try:
        train = TrainConfig(**train_kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad train value: {exc}") from exc

    m = _require_int(doc.get("m", 2), "m")
    if m < 1:
        raise ConfigError(f"m must be >= 1, got {m}")
    mibif_k = _require_int(doc.get("mibif_k", 4), "mibif_k")
    if mibif_k < 1:
        raise ConfigError(f"mibif_k must be >= 1, got {mibif_k}")

    bank_name = bank if bank is not None else doc.get("bank", "full")
    if bank_name not in BANK_BUILDERS:
        raise ConfigError(
            f"unknown bank {bank_name!r}; expected one of {sorted(BANK_BUILDERS)}"
        )

    out_value = out if out is not None else doc.get("out")
    if out_value is not None and not isinstance(out_value, str):
        raise ConfigError("out must be a path string")

    return ExperimentConfig(
        seed=seed,
        study_path=study_path,
        synth=synth,
        methods=methods,
        settings=settings,
        train=train,
        m=m,
        mibif_k=mibif_k,
        bank=bank_name,
        out=out_value,
        source=dict(doc),
    )


def load_experiment_config(
    path: str | Path,
    *,
    seed: int | None = None,
    out: str | None = None,
    bank: str | None = None,
) -> ExperimentConfig:
    """Read and validate a config file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_experiment_config(doc, seed=seed, out=out, bank=bank)
