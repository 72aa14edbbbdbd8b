"""Leave-one-subject-out evaluation and method comparison.

For a held-out test subject, cross-validation cycles through the remaining
subjects: each in turn provides its training session as the validation set
while the other subjects' training sessions form the fit set. The held-out
subject's trials never enter any fold. Per network setting, the fold kappas
are averaged; the best setting (highest mean, lowest index on ties) is then
retrained on all non-test subjects and scored once on the held-out
subject's test session.

Fold jobs are pure functions of the covariance cache, so they parallelize
across processes and can be cached to disk for resumable long runs.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .baselines import (
    DEFAULT_M,
    DEFAULT_MIBIF_K,
    run_csp_baseline,
    run_fbcsp_baseline,
)
from .data import StudyDataset
from .dsp import build_broadband_bank, build_fbcsp_bank, build_full_bank
from .errors import ConfigError, DataError
from .features import (
    BankCovariances,
    bank_feature_matrix,
    compute_bank_covariances,
    fit_bank_csp,
    stack_train_sessions,
)
from .jobs import parallel_map
from .metrics import ConfusionMatrix, TTestResult, kappa, paired_t_test
from .sae import NetworkConfig, TrainConfig, TrainedSae, predict, train

# The five cross-validated architectures: (autoencoder nodes, classifier nodes).
DEFAULT_NETWORK_SHAPES: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...] = (
    ((5, 3, 5), (3, 3, 3, 1)),
    ((10, 5, 10), (5, 5, 5, 1)),
    ((20, 10, 20), (10, 5, 5, 1)),
    ((30, 15, 30), (15, 10, 5, 1)),
    ((40, 20, 40), (15, 10, 5, 1)),
)

METHOD_NAMES = ("csp", "fbcsp", "sisae")


def network_config_for(setting, input_dim: int) -> NetworkConfig:
    """Materialize a setting (config or shape pair) for a feature width."""
    if isinstance(setting, NetworkConfig):
        if setting.input_dim != input_dim:
            raise ConfigError(
                f"setting expects {setting.input_dim} inputs, features have "
                f"{input_dim}"
            )
        return setting
    ae_nodes, clf_nodes = setting
    return NetworkConfig(
        input_dim=input_dim, ae_nodes=tuple(ae_nodes), clf_nodes=tuple(clf_nodes)
    )


@dataclass(frozen=True)
class FoldSpec:
    """One cross-validation fold; the test subject appears nowhere."""

    fold_index: int
    test_subject: int
    validation_subject: int
    train_subjects: tuple[int, ...]


def loso_folds(subject_ids: Sequence[int], test_subject: int) -> tuple[FoldSpec, ...]:
    """All validation rotations over the non-test subjects, in id order."""
    ids = sorted(set(subject_ids))
    if test_subject not in ids:
        raise DataError(f"unknown test subject {test_subject}")
    if len(ids) < 3:
        raise DataError(f"need at least 3 subjects, got {len(ids)}")
    others = [s for s in ids if s != test_subject]
    return tuple(
        FoldSpec(
            fold_index=i,
            test_subject=test_subject,
            validation_subject=val,
            train_subjects=tuple(s for s in others if s != val),
        )
        for i, val in enumerate(others)
    )


def run_fold(
    covs: BankCovariances,
    fold: FoldSpec,
    settings: Sequence,
    train_cfg: TrainConfig,
    m: int = DEFAULT_M,
) -> tuple[int, int, tuple[float, ...]]:
    """Train every setting on the fold's fit set, score on its validation set.

    Returns (fold_index, validation_subject, kappa per setting); spatial
    projections are refit from cached covariances, once per fold.
    """
    pooled, labels, origins = stack_train_sessions(covs, fold.train_subjects)
    assert fold.test_subject not in origins
    assert fold.validation_subject not in origins
    models = fit_bank_csp(pooled, labels, m)
    x_train = bank_feature_matrix(models, pooled)
    val = covs.train[fold.validation_subject]
    x_val = bank_feature_matrix(models, val.covariances)
    scores = []
    for setting in settings:
        cfg = network_config_for(setting, x_train.shape[1])
        model = train(x_train, labels, cfg, train_cfg)
        predictions = predict(model.params, model.stats, x_val)
        scores.append(kappa(ConfusionMatrix.from_labels(val.labels, predictions)))
    return fold.fold_index, fold.validation_subject, tuple(scores)


@dataclass(frozen=True, eq=False)
class LosoResult:
    """Cross-validation kappas for one test subject."""

    test_subject: int
    validation_subjects: tuple[int, ...]
    fold_kappas: np.ndarray  # (n_settings, n_folds)

    @property
    def setting_means(self) -> np.ndarray:
        return self.fold_kappas.mean(axis=1)

    @property
    def mean(self) -> float:
        return float(self.setting_means.mean())

    @property
    def std(self) -> float:
        means = self.setting_means
        return float(means.std(ddof=1)) if means.shape[0] > 1 else 0.0

    @property
    def best_setting(self) -> int:
        return int(np.argmax(self.setting_means))


def assemble_loso_result(
    test_subject: int, fold_outputs: Sequence[tuple[int, int, tuple[float, ...]]]
) -> LosoResult:
    """Combine per-fold outputs (any order) into one result."""
    ordered = sorted(fold_outputs, key=lambda out: out[0])
    if [out[0] for out in ordered] != list(range(len(ordered))):
        raise DataError("fold outputs do not cover contiguous fold indices")
    fold_kappas = np.array([out[2] for out in ordered]).T
    return LosoResult(
        test_subject=test_subject,
        validation_subjects=tuple(out[1] for out in ordered),
        fold_kappas=fold_kappas,
    )


def loso_cv(
    study: StudyDataset | None,
    test_subject: int,
    settings: Sequence = DEFAULT_NETWORK_SHAPES,
    train_cfg: TrainConfig = TrainConfig(),
    *,
    m: int = DEFAULT_M,
    bank=None,
    covs: BankCovariances | None = None,
    n_jobs: int = 1,
) -> LosoResult:
    """Full cross-validation grid for one test subject."""
    if not settings:
        raise ConfigError("at least one network setting required")
    if covs is None:
        if study is None:
            raise ConfigError("either a study or a covariance cache is required")
        covs = compute_bank_covariances(study, bank or build_full_bank())
    folds = loso_folds(covs.subject_ids, test_subject)
    runner = functools.partial(
        _fold_job, covs=covs, settings=tuple(settings), train_cfg=train_cfg, m=m
    )
    return assemble_loso_result(test_subject, parallel_map(runner, folds, n_jobs))


def _fold_job(fold: FoldSpec, *, covs, settings, train_cfg, m):
    # Module-level so process pools can pickle it.
    return run_fold(covs, fold, settings, train_cfg, m)


@dataclass(frozen=True, eq=False)
class SisaeEvaluation:
    """Held-out score plus the cross-validation evidence behind it."""

    kappa: float
    best_setting: int
    cv: LosoResult | None
    model: TrainedSae


def evaluate_sisae(
    study: StudyDataset | None,
    test_subject: int,
    settings: Sequence = DEFAULT_NETWORK_SHAPES,
    train_cfg: TrainConfig = TrainConfig(),
    *,
    m: int = DEFAULT_M,
    bank=None,
    covs: BankCovariances | None = None,
    n_jobs: int = 1,
) -> SisaeEvaluation:
    """Select a setting by cross-validation, retrain, score the test session.

    With a single candidate setting the selection stage is skipped.
    """
    if not settings:
        raise ConfigError("at least one network setting required")
    if covs is None:
        if study is None:
            raise ConfigError("either a study or a covariance cache is required")
        covs = compute_bank_covariances(study, bank or build_full_bank())
    cv = None
    best = 0
    if len(settings) > 1:
        cv = loso_cv(
            None,
            test_subject,
            settings,
            train_cfg,
            m=m,
            covs=covs,
            n_jobs=n_jobs,
        )
        best = cv.best_setting
    train_ids = [s for s in covs.subject_ids if s != test_subject]
    if test_subject not in covs.subject_ids:
        raise DataError(f"unknown test subject {test_subject}")
    if len(train_ids) < 1:
        raise DataError("no training subjects left after holding out")
    pooled, labels, _ = stack_train_sessions(covs, train_ids)
    models = fit_bank_csp(pooled, labels, m)
    x_train = bank_feature_matrix(models, pooled)
    cfg = network_config_for(settings[best], x_train.shape[1])
    trained = train(x_train, labels, cfg, train_cfg)
    session = covs.test[test_subject]
    x_test = bank_feature_matrix(models, session.covariances)
    predictions = predict(trained.params, trained.stats, x_test)
    score = kappa(ConfusionMatrix.from_labels(session.labels, predictions))
    return SisaeEvaluation(kappa=score, best_setting=best, cv=cv, model=trained)


def evaluate_method(
    study: StudyDataset,
    test_subject: int,
    method: str,
    *,
    settings: Sequence = DEFAULT_NETWORK_SHAPES,
    train_cfg: TrainConfig = TrainConfig(),
    m: int = DEFAULT_M,
    mibif_k: int = DEFAULT_MIBIF_K,
    sisae_bank=None,
    covs: BankCovariances | None = None,
    n_jobs: int = 1,
) -> float:
    """Kappa of one method on one held-out subject's test session.

    ``covs`` must match the method's bank when provided (broadband for csp,
    the nine-band bank for fbcsp, ``sisae_bank`` for sisae).
    """
    if method == "csp":
        return run_csp_baseline(study, test_subject, m=m, covs=covs)
    if method == "fbcsp":
        return run_fbcsp_baseline(study, test_subject, mibif_k, m=m, covs=covs)
    if method == "sisae":
        return evaluate_sisae(
            study,
            test_subject,
            settings,
            train_cfg,
            m=m,
            bank=sisae_bank,
            covs=covs,
            n_jobs=n_jobs,
        ).kappa
    raise ConfigError(f"unknown method {method!r}; expected one of {METHOD_NAMES}")


@dataclass(frozen=True)
class MethodTTest:
    method_a: str
    method_b: str
    result: TTestResult


@dataclass(frozen=True, eq=False)
class CompareResult:
    """Per-subject kappas per method, plus paired significance tests."""

    subject_ids: tuple[int, ...]
    methods: tuple[str, ...]
    kappas: np.ndarray  # (n_subjects, n_methods)
    t_tests: tuple[MethodTTest, ...]
    best_settings: dict[int, int]

    def column(self, method: str) -> np.ndarray:
        return self.kappas[:, self.methods.index(method)]

    @property
    def averages(self) -> np.ndarray:
        return self.kappas.mean(axis=0)


def method_bank(method: str, sisae_bank=None):
    """The analysis bank each method is defined over."""
    if method == "csp":
        return build_broadband_bank()
    if method == "fbcsp":
        return build_fbcsp_bank()
    if method == "sisae":
        return sisae_bank or build_full_bank()
    raise ConfigError(f"unknown method {method!r}; expected one of {METHOD_NAMES}")


def compare_methods(
    study: StudyDataset,
    methods: Sequence[str] = METHOD_NAMES,
    settings: Sequence = DEFAULT_NETWORK_SHAPES,
    train_cfg: TrainConfig = TrainConfig(),
    *,
    m: int = DEFAULT_M,
    mibif_k: int = DEFAULT_MIBIF_K,
    sisae_bank=None,
    n_jobs: int = 1,
) -> CompareResult:
    """Every method on every held-out subject, sharing covariance caches."""
    methods = tuple(methods)
    if not methods:
        raise ConfigError("at least one method required")
    cov_cache: dict[tuple, BankCovariances] = {}
    for method in methods:
        bank = method_bank(method, sisae_bank)
        key = tuple((b.low_hz, b.high_hz) for b in bank)
        if key not in cov_cache:
            cov_cache[key] = compute_bank_covariances(study, bank)

    subject_ids = study.subject_ids
    kappas = np.empty((len(subject_ids), len(methods)))
    best_settings: dict[int, int] = {}
    for si, subject in enumerate(subject_ids):
        for mi, method in enumerate(methods):
            bank = method_bank(method, sisae_bank)
            covs = cov_cache[tuple((b.low_hz, b.high_hz) for b in bank)]
            if method == "sisae":
                evaluation = evaluate_sisae(
                    None,
                    subject,
                    settings,
                    train_cfg,
                    m=m,
                    covs=covs,
                    n_jobs=n_jobs,
                )
                kappas[si, mi] = evaluation.kappa
                best_settings[subject] = evaluation.best_setting
            else:
                kappas[si, mi] = evaluate_method(
                    study, subject, method, m=m, mibif_k=mibif_k, covs=covs
                )

    t_tests = []
    if "sisae" in methods and len(subject_ids) >= 2:
        sisae_col = kappas[:, methods.index("sisae")]
        for method in methods:
            if method == "sisae":
                continue
            t_tests.append(
                MethodTTest(
                    method_a="sisae",
                    method_b=method,
                    result=paired_t_test(sisae_col, kappas[:, methods.index(method)]),
                )
            )
    return CompareResult(
        subject_ids=subject_ids,
        methods=methods,
        kappas=kappas,
        t_tests=tuple(t_tests),
        best_settings=best_settings,
    )
