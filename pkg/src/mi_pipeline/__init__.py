"""Subject-independent motor-imagery EEG classification pipeline.

Bandpass filter banks and common spatial patterns turn raw multichannel
trials into fused log band-power features; a supervised autoencoder, or one
of two reference systems (broadband CSP + LDA, nine-band FBCSP + LDA),
classifies them. Evaluation follows a leave-one-subject-out protocol with
Cohen's kappa and paired t-tests, and a deterministic synthetic-study
generator stands in for recorded data.
"""

from ._version import __version__
from .baselines import (
    LdaModel,
    MibifSelector,
    fit_lda,
    fit_mibif,
    mutual_information,
    run_csp_baseline,
    run_fbcsp_baseline,
)
from .csp import (
    CspModel,
    csp_features,
    fit_csp,
    fit_csp_from_covariances,
    spatial_covariance,
)
from .data import Label, StudyDataset, SubjectDataset, Trial, epoch_window
from .dsp import (
    BandSpec,
    FilterBankSpec,
    SosFilter,
    apply_filter,
    build_broadband_bank,
    build_fbcsp_bank,
    build_full_bank,
    design_butterworth_bandpass,
    frequency_response,
)
from .errors import ConfigError, DataError, NumericalError, PipelineError
from .evaluation import (
    DEFAULT_NETWORK_SHAPES,
    CompareResult,
    LosoResult,
    compare_methods,
    evaluate_method,
    evaluate_sisae,
    loso_cv,
)
from .features import BankCovariances, compute_bank_covariances
from .io import load_study, read_session, save_study, write_session
from .metrics import ConfusionMatrix, TTestResult, kappa, paired_t_test
from .sae import (
    NetworkConfig,
    SaeParams,
    StandardizerStats,
    TrainConfig,
    TrainedSae,
    classify,
    composite_loss,
    decode,
    encode,
    gradients,
    init_params,
    load_checkpoint,
    predict,
    predict_proba,
    save_checkpoint,
    train,
)
from .synth import SynthSpec, synth_study

__all__ = [
    "__version__",
    "BandSpec",
    "BankCovariances",
    "CompareResult",
    "ConfigError",
    "ConfusionMatrix",
    "CspModel",
    "DataError",
    "DEFAULT_NETWORK_SHAPES",
    "FilterBankSpec",
    "Label",
    "LdaModel",
    "LosoResult",
    "MibifSelector",
    "NetworkConfig",
    "NumericalError",
    "PipelineError",
    "SaeParams",
    "SosFilter",
    "StandardizerStats",
    "StudyDataset",
    "SubjectDataset",
    "SynthSpec",
    "TrainConfig",
    "TrainedSae",
    "TTestResult",
    "Trial",
    "apply_filter",
    "build_broadband_bank",
    "build_fbcsp_bank",
    "build_full_bank",
    "classify",
    "compare_methods",
    "composite_loss",
    "compute_bank_covariances",
    "csp_features",
    "decode",
    "design_butterworth_bandpass",
    "encode",
    "epoch_window",
    "evaluate_method",
    "evaluate_sisae",
    "fit_csp",
    "fit_csp_from_covariances",
    "fit_lda",
    "fit_mibif",
    "frequency_response",
    "gradients",
    "init_params",
    "kappa",
    "load_checkpoint",
    "load_study",
    "loso_cv",
    "mutual_information",
    "paired_t_test",
    "predict",
    "predict_proba",
    "read_session",
    "run_csp_baseline",
    "run_fbcsp_baseline",
    "save_checkpoint",
    "save_study",
    "spatial_covariance",
    "synth_study",
    "train",
    "write_session",
]
