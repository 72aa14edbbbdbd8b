"""Comparison systems: broadband CSP + LDA and nine-band FBCSP + LDA.

The broadband baseline spatially filters a single 4-40 Hz band. The
filter-bank baseline extracts features from nine contiguous 4 Hz bands,
keeps the most label-informative columns by Parzen-window mutual
information (best-individual-feature ranking with within-band pair
completion), and classifies with the same shrinkage LDA.

Both train on the pooled training sessions of every subject except the
held-out one and are scored on the held-out subject's test session.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Label, StudyDataset
from .dsp import build_broadband_bank, build_fbcsp_bank
from .errors import ConfigError, DataError, NumericalError
from .features import (
    BankCovariances,
    bank_feature_matrix,
    compute_bank_covariances,
    fit_bank_csp,
    stack_train_sessions,
)
from .metrics import ConfusionMatrix, kappa

DEFAULT_M = 2
DEFAULT_MIBIF_K = 4
LDA_SHRINKAGE = 1e-6
SILVERMAN_EXPONENT = 0.2  # bandwidth ~ std * (4 / (3 n))^(1/5)


@dataclass(frozen=True, eq=False)
class LdaModel:
    """Linear discriminant; positive score means the Left class."""

    weights: np.ndarray
    bias: float

    def __post_init__(self) -> None:
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64))
        if w.ndim != 1 or not np.isfinite(w).all() or not np.isfinite(self.bias):
            raise NumericalError("discriminant must be a finite vector and bias")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    def decision(self, features: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[1] != self.weights.shape[0]:
            raise DataError(
                f"expected {self.weights.shape[0]} features, got {x.shape[1]}"
            )
        return x @ self.weights + self.bias

    def predict(self, features: np.ndarray) -> np.ndarray:
        scores = self.decision(features)
        return np.where(scores >= 0.0, int(Label.LEFT), int(Label.RIGHT)).astype(
            np.int64
        )


def fit_lda(features: np.ndarray, labels: np.ndarray) -> LdaModel:
    """Pooled-covariance LDA with a small ridge on the covariance diagonal.

    The pooled scatter is divided by the total sample count, so duplicating
    every training point reproduces the identical model.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError("features must be a nonempty 2-d array")
    if y.shape != (x.shape[0],):
        raise DataError("one label per feature row required")
    left = x[y == int(Label.LEFT)]
    right = x[y == int(Label.RIGHT)]
    if len(left) == 0 or len(right) == 0:
        raise DataError("both classes required to fit the discriminant")
    mu_left = left.mean(axis=0)
    mu_right = right.mean(axis=0)
    centered_left = left - mu_left
    centered_right = right - mu_right
    pooled = (
        centered_left.T @ centered_left + centered_right.T @ centered_right
    ) / x.shape[0]
    gamma = LDA_SHRINKAGE * pooled.diagonal().mean()
    pooled = pooled + gamma * np.eye(x.shape[1])
    try:
        w = np.linalg.solve(pooled, mu_left - mu_right)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"pooled covariance is singular: {exc}") from exc
    return LdaModel(weights=w, bias=float(-0.5 * w @ (mu_left + mu_right)))


def _parzen_density(points: np.ndarray, centers: np.ndarray, h: float) -> np.ndarray:
    z = (points[:, None] - centers[None, :]) / h
    return np.exp(-0.5 * z * z).sum(axis=1) / (
        centers.shape[0] * h * np.sqrt(2.0 * np.pi)
    )


def mutual_information(values: np.ndarray, labels: np.ndarray) -> float:
    """I(feature; label) in bits via Gaussian Parzen windows.

    Bandwidths follow Silverman's rule per class; a zero-spread class falls
    back to the pooled spread, and a zero-spread feature carries 0 bits.
    """
    x = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 1 or y.shape != x.shape:
        raise DataError("values and labels must be equal-length vectors")
    classes = [x[y == int(Label.LEFT)], x[y == int(Label.RIGHT)]]
    if any(len(c) < 2 for c in classes):
        raise DataError("need at least 2 samples per class")
    pooled_std = x.std(ddof=1)
    if pooled_std == 0.0:
        return 0.0

    n = x.shape[0]
    priors = np.array([len(c) / n for c in classes])
    likelihoods = np.empty((2, n))
    for ci, c in enumerate(classes):
        std = c.std(ddof=1)
        if std == 0.0:
            std = pooled_std
        h = std * (4.0 / (3.0 * len(c))) ** SILVERMAN_EXPONENT
        likelihoods[ci] = _parzen_density(x, c, h)

    joint = priors[:, None] * likelihoods
    evidence = joint.sum(axis=0)
    posteriors = joint / evidence
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(posteriors > 0.0, posteriors * np.log2(posteriors), 0.0)
    h_y_given_f = -plogp.sum(axis=0).mean()
    h_y = -(priors * np.log2(priors)).sum()
    return max(float(h_y - h_y_given_f), 0.0)


@dataclass(frozen=True, eq=False)
class MibifSelector:
    """Mutual-information ranking with within-band pair completion."""

    scores: np.ndarray
    selected_indices: tuple[int, ...]
    k: int

    def transform(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.scores.shape[0]:
            raise DataError(
                f"expected {self.scores.shape[0]} feature columns, got {x.shape}"
            )
        return x[:, list(self.selected_indices)]


def fit_mibif(
    features: np.ndarray, labels: np.ndarray, k: int, pair_block: int = 2 * DEFAULT_M
) -> MibifSelector:
    """Rank columns by mutual information, keep the top k plus pair partners.

    Columns come in per-band blocks of ``pair_block`` projections; the
    partner of block position j is position (block_size - 1 - j), i.e. the
    filter extracted for the opposite class. Ties rank by lowest index.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("features must be 2-d")
    d = x.shape[1]
    if k < 1 or k > d:
        raise ConfigError(f"k must be in [1, {d}], got {k}")
    if pair_block < 2 or d % pair_block != 0:
        raise ConfigError(
            f"feature count {d} is not divisible into blocks of {pair_block}"
        )
    scores = np.array([mutual_information(x[:, j], labels) for j in range(d)])
    ranked = np.argsort(-scores, kind="stable")  # descending, lowest index on ties
    chosen: set[int] = set()
    for idx in ranked[:k]:
        block_start = (idx // pair_block) * pair_block
        partner = block_start + (pair_block - 1 - (idx - block_start))
        chosen.add(int(idx))
        chosen.add(int(partner))
    return MibifSelector(
        scores=scores, selected_indices=tuple(sorted(chosen)), k=k
    )


def _pooled_training_features(
    covs: BankCovariances, test_subject: int, m: int
) -> tuple[np.ndarray, np.ndarray, tuple]:
    train_ids = [s for s in covs.subject_ids if s != test_subject]
    if test_subject not in covs.train:
        raise DataError(f"unknown test subject {test_subject}")
    if not train_ids:
        raise DataError("no training subjects left after holding out")
    pooled, labels, _ = stack_train_sessions(covs, train_ids)
    models = fit_bank_csp(pooled, labels, m)
    return bank_feature_matrix(models, pooled), labels, models


def _test_features(covs: BankCovariances, test_subject: int, models) -> tuple:
    session = covs.test[test_subject]
    return bank_feature_matrix(models, session.covariances), session.labels


def run_csp_baseline(
    study: StudyDataset,
    test_subject: int,
    *,
    m: int = DEFAULT_M,
    covs: BankCovariances | None = None,
) -> float:
    """Broadband CSP + LDA kappa on the held-out subject's test session."""
    if covs is None:
        covs = compute_bank_covariances(study, build_broadband_bank())
    train_x, train_y, models = _pooled_training_features(covs, test_subject, m)
    lda = fit_lda(train_x, train_y)
    test_x, test_y = _test_features(covs, test_subject, models)
    return kappa(ConfusionMatrix.from_labels(test_y, lda.predict(test_x)))


def run_fbcsp_baseline(
    study: StudyDataset,
    test_subject: int,
    k: int = DEFAULT_MIBIF_K,
    *,
    m: int = DEFAULT_M,
    covs: BankCovariances | None = None,
) -> float:
    """Nine-band FBCSP + MIBIF + LDA kappa on the held-out test session."""
    if covs is None:
        covs = compute_bank_covariances(study, build_fbcsp_bank())
    train_x, train_y, models = _pooled_training_features(covs, test_subject, m)
    selector = fit_mibif(train_x, train_y, k, pair_block=2 * m)
    lda = fit_lda(selector.transform(train_x), train_y)
    test_x, test_y = _test_features(covs, test_subject, models)
    predictions = lda.predict(selector.transform(test_x))
    return kappa(ConfusionMatrix.from_labels(test_y, predictions))
