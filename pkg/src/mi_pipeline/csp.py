"""Common spatial patterns on trace-normalized covariances.

Covariances are raw second-moment matrices scaled to unit trace; trials are
not mean-subtracted (bandpassed signals are already zero-mean in
expectation). Trace normalization makes every trial contribute equally to
the class means regardless of amplitude.

The projection diagonalizes both class means at once: whiten the composite
covariance, then eigendecompose the whitened left-class mean. Eigenvalues
are sorted descending, so the first rows of the filter matrix maximize
left-class variance share and the last rows maximize right-class share.
Log band-power features depend on a trial only through its normalized
covariance, which lets callers cache one covariance per trial per band and
refit projections cheaply across cross-validation folds.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Label, Trial, labels_of
from .errors import ConfigError, DataError, NumericalError

RIDGE_SCALE = 1e-9
SIGN_TOL = 1e-12

_MODEL_MAGIC = b"MICSP"
_MODEL_VERSION = 1


@dataclass(frozen=True, eq=False)
class CspModel:
    """Fitted spatial projection.

    filters: (2m, C) matrix; rows are spatial filters, first m for the
        left class, last m for the right class.
    eigenvalues: full whitened left-class spectrum, descending, length C.
    """

    filters: np.ndarray
    eigenvalues: np.ndarray
    m: int

    def __post_init__(self) -> None:
        filters = np.ascontiguousarray(np.asarray(self.filters, dtype=np.float64))
        eigenvalues = np.ascontiguousarray(
            np.asarray(self.eigenvalues, dtype=np.float64)
        )
        if filters.ndim != 2 or eigenvalues.ndim != 1:
            raise ConfigError("filters must be 2-d and eigenvalues 1-d")
        if self.m < 1 or filters.shape[0] != 2 * self.m:
            raise ConfigError(
                f"expected {2 * self.m} filter rows, got {filters.shape[0]}"
            )
        if filters.shape[1] != eigenvalues.shape[0]:
            raise ConfigError("filter width must match spectrum length")
        if 2 * self.m > filters.shape[1]:
            raise ConfigError(
                f"m={self.m} needs at least {2 * self.m} channels, "
                f"got {filters.shape[1]}"
            )
        if not (np.isfinite(filters).all() and np.isfinite(eigenvalues).all()):
            raise NumericalError("non-finite values in fitted projection")
        filters.setflags(write=False)
        eigenvalues.setflags(write=False)
        object.__setattr__(self, "filters", filters)
        object.__setattr__(self, "eigenvalues", eigenvalues)

    @property
    def n_channels(self) -> int:
        return self.filters.shape[1]

    @property
    def selected_eigenvalues(self) -> np.ndarray:
        """Spectrum entries matching the 2m retained filter rows."""
        return np.concatenate(
            [self.eigenvalues[: self.m], self.eigenvalues[-self.m :]]
        )


def spatial_covariance(samples: np.ndarray) -> np.ndarray:
    """Second-moment matrix of one trial, scaled to unit trace."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"samples must be 2-d (channels x samples), got {x.ndim}-d")
    cov = x @ x.T
    tr = np.trace(cov)
    if not np.isfinite(tr) or tr <= 0.0:
        raise NumericalError(f"covariance trace must be positive, got {tr}")
    return cov / tr


def trial_covariances(trials: Sequence[Trial]) -> np.ndarray:
    """Stack of per-trial normalized covariances, shape (N, C, C)."""
    return np.stack([spatial_covariance(t.samples) for t in trials])


def _fix_signs(filters: np.ndarray) -> np.ndarray:
    """Flip each row so its first non-negligible entry is positive."""
    out = filters.copy()
    for row in out:
        scale = np.abs(row).max()
        if scale == 0.0:
            continue
        idx = np.flatnonzero(np.abs(row) > SIGN_TOL * scale)[0]
        if row[idx] < 0.0:
            row *= -1.0
    return out


def fit_csp_from_covariances(
    covariances: np.ndarray, labels: np.ndarray, m: int
) -> CspModel:
    """Fit the projection from per-trial normalized covariances and labels."""
    covs = np.asarray(covariances, dtype=np.float64)
    y = np.asarray(labels)
    if covs.ndim != 3 or covs.shape[1] != covs.shape[2]:
        raise DataError(f"covariances must be (N, C, C), got {covs.shape}")
    if y.shape != (covs.shape[0],):
        raise DataError("one label per covariance required")
    left = covs[y == int(Label.LEFT)]
    right = covs[y == int(Label.RIGHT)]
    if len(left) == 0 or len(right) == 0:
        raise DataError("both classes must be present to fit the projection")
    n_channels = covs.shape[1]
    if m < 1 or 2 * m > n_channels:
        raise ConfigError(f"m={m} invalid for {n_channels} channels")

    c1 = left.mean(axis=0)
    c2 = right.mean(axis=0)
    composite = c1 + c2
    composite = composite + RIDGE_SCALE * np.trace(composite) * np.eye(n_channels)

    evals, evecs = np.linalg.eigh(composite)
    if evals[0] <= 0.0:
        raise NumericalError("composite covariance is not positive definite")
    whitener = (evecs / np.sqrt(evals)).T  # rows scaled by lambda^{-1/2}

    s1 = whitener @ c1 @ whitener.T
    s1 = (s1 + s1.T) / 2.0
    mu, b = np.linalg.eigh(s1)
    order = np.argsort(mu)[::-1]
    mu = mu[order]
    w_full = (b[:, order]).T @ whitener

    rows = np.concatenate([np.arange(m), np.arange(n_channels - m, n_channels)])
    return CspModel(filters=_fix_signs(w_full[rows]), eigenvalues=mu, m=m)


def fit_csp(trials: Sequence[Trial], m: int) -> CspModel:
    """Fit the projection directly from labeled trials."""
    if not trials:
        raise DataError("no trials")
    return fit_csp_from_covariances(trial_covariances(trials), labels_of(trials), m)


def csp_features_from_covariance(model: CspModel, covariance: np.ndarray) -> np.ndarray:
    """Log share of projected variance per retained filter, length 2m."""
    cov = np.asarray(covariance, dtype=np.float64)
    if cov.shape != (model.n_channels, model.n_channels):
        raise DataError(
            f"covariance shape {cov.shape} does not match "
            f"{model.n_channels} channels"
        )
    variances = np.einsum("ij,jk,ik->i", model.filters, cov, model.filters)
    total = variances.sum()
    if not np.isfinite(total) or total <= 0.0 or (variances <= 0.0).any():
        raise NumericalError("projected variances must be positive")
    return np.log(variances / total)


def csp_features(model: CspModel, samples: np.ndarray) -> np.ndarray:
    """Features for one trial's samples; equals the covariance route exactly."""
    return csp_features_from_covariance(model, spatial_covariance(samples))


def fused_features_from_covariances(
    models: Sequence[CspModel], covariances_per_band: np.ndarray
) -> np.ndarray:
    """Concatenate per-band features for one trial, shape (2m * n_bands,).

    ``covariances_per_band`` holds one normalized covariance per band,
    shape (n_bands, C, C), ordered like ``models``.
    """
    covs = np.asarray(covariances_per_band, dtype=np.float64)
    if covs.ndim != 3 or covs.shape[0] != len(models):
        raise DataError(
            f"expected {len(models)} per-band covariances, got shape {covs.shape}"
        )
    return np.concatenate(
        [csp_features_from_covariance(mod, cov) for mod, cov in zip(models, covs)]
    )


def save_csp_model(model: CspModel, path: str | Path) -> None:
    """Write one model as magic + version + JSON header + float64 payload."""
    header = {
        "m": model.m,
        "n_channels": model.n_channels,
        "n_filters": int(model.filters.shape[0]),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    payload = np.concatenate([model.filters.ravel(), model.eigenvalues]).astype(
        "<f8"
    )
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(struct.pack("<HI", _MODEL_VERSION, len(blob)))
        fh.write(blob)
        fh.write(payload.tobytes())


def load_csp_model(path: str | Path) -> CspModel:
    """Read a model written by :func:`save_csp_model`."""
    raw = Path(path).read_bytes()
    fixed = len(_MODEL_MAGIC) + struct.calcsize("<HI")
    if len(raw) < fixed:
        raise DataError(f"truncated model file {path}")
    if raw[: len(_MODEL_MAGIC)] != _MODEL_MAGIC:
        raise DataError(f"bad magic in model file {path}")
    version, blob_len = struct.unpack_from("<HI", raw, len(_MODEL_MAGIC))
    if version != _MODEL_VERSION:
        raise DataError(f"unsupported model version {version}")
    try:
        header = json.loads(raw[fixed : fixed + blob_len].decode())
        m = int(header["m"])
        n_channels = int(header["n_channels"])
        n_filters = int(header["n_filters"])
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise DataError(f"malformed model header in {path}: {exc}") from exc
    values = np.frombuffer(raw[fixed + blob_len :], dtype="<f8")
    expected = n_filters * n_channels + n_channels
    if values.shape[0] != expected:
        raise DataError(
            f"model payload has {values.shape[0]} values, expected {expected}"
        )
    return CspModel(
        filters=values[: n_filters * n_channels].reshape(n_filters, n_channels),
        eigenvalues=values[n_filters * n_channels :],
        m=m,
    )
