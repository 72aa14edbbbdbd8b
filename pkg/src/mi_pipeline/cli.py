"""Batch experiment driver.

Subcommands: ``synth`` writes a synthetic study in the interchange format,
``loso`` runs the cross-validation grid for every test subject, ``compare``
scores every method on every held-out subject, and ``bank inspect``
enumerates an analysis bank. Long runs persist per-unit partial results
under ``<out>/partial/`` keyed by the config hash; ``--resume`` reuses them
after an interruption instead of recomputing.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import functools
import json
import sys
from pathlib import Path

from ._version import __version__
from .config import (
    ExperimentConfig,
    config_hash,
    load_experiment_config,
    parse_experiment_config,
)
from .data import StudyDataset
from .dsp import BANK_BUILDERS, build_bank, design_butterworth_bandpass
from .errors import ConfigError, DataError, NumericalError
from .evaluation import (
    CompareResult,
    MethodTTest,
    assemble_loso_result,
    evaluate_method,
    evaluate_sisae,
    loso_folds,
    method_bank,
    run_fold,
)
from .features import compute_bank_covariances
from .io import load_study, save_study
from .jobs import parallel_map, resolve_jobs
from .metrics import paired_t_test
from .report import (
    plot_compare_bars,
    plot_loso_heatmap,
    stamp_line,
    write_compare_csv,
    write_compare_markdown,
    write_compare_ttest_csv,
    write_loso_csv,
    write_loso_markdown,
    write_run_info,
    write_training_log_csv,
)
from .synth import synth_study

import numpy as np


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mi-pipeline",
        description="Subject-independent motor-imagery pipeline driver",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="write a synthetic study to disk")
    synth.add_argument("--config", required=True, help="synthesis recipe (JSON)")
    synth.add_argument("--seed", type=int, help="overrides the config seed")
    synth.add_argument("--out", help="output directory")
    synth.set_defaults(func=cmd_synth)

    for name, help_text, func in (
        ("loso", "cross-validation grid for every test subject", cmd_loso),
        ("compare", "score every method on every held-out subject", cmd_compare),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="experiment config (JSON)")
        cmd.add_argument("--seed", type=int, help="overrides the config seed")
        cmd.add_argument("--out", help="overrides the config output directory")
        cmd.add_argument("--jobs", type=int, help="worker processes")
        cmd.add_argument(
            "--bank",
            choices=sorted(BANK_BUILDERS),
            help="overrides the analysis bank",
        )
        cmd.add_argument(
            "--resume",
            action="store_true",
            help="reuse partial results from an interrupted run",
        )
        cmd.set_defaults(func=func)

    bank = sub.add_parser("bank", help="analysis bank utilities")
    bank_sub = bank.add_subparsers(dest="bank_command", required=True)
    inspect = bank_sub.add_parser("inspect", help="enumerate a bank")
    inspect.add_argument("--bank", choices=sorted(BANK_BUILDERS), default="full")
    inspect.add_argument("--m", type=int, default=2, help="filter pairs per band")
    inspect.add_argument(
        "--fs", type=float, help="design all filters at this rate and report poles"
    )
    inspect.add_argument(
        "--all", action="store_true", help="list every band, not just a summary"
    )
    inspect.set_defaults(func=cmd_bank_inspect)

    return parser


def _required_out(cfg: ExperimentConfig) -> Path:
    if cfg.out is None:
        raise ConfigError("output directory required ('out' in config or --out)")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_study_source(cfg: ExperimentConfig) -> StudyDataset:
    if cfg.study_path is not None:
        return load_study(Path(cfg.study_path))
    return synth_study(cfg.synth, cfg.seed)


def _partial_dir(out_dir: Path) -> Path:
    partial = out_dir / "partial"
    partial.mkdir(exist_ok=True)
    return partial


def _load_partial(path: Path, cfg_hash: str) -> dict | None:
    if not path.exists():
        return None
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt partial result {path}: {exc}") from exc
    if doc.get("config_sha256") != cfg_hash:
        raise ConfigError(
            f"partial result {path} was produced by a different config; "
            "remove the partial directory or use a fresh output directory"
        )
    return doc


def _write_partial(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def cmd_synth(args) -> int:
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")

    if "synth" in doc:
        extras = set(doc) - {"synth", "seed", "out"}
        if extras:
            raise ConfigError(f"unknown config keys: {sorted(extras)}")
        synth_doc = dict(doc)
    else:
        spec_fields = {k: v for k, v in doc.items() if k not in ("seed", "out")}
        synth_doc = {"synth": spec_fields}
        for key in ("seed", "out"):
            if key in doc:
                synth_doc[key] = doc[key]

    cfg = parse_experiment_config(synth_doc, seed=args.seed, out=args.out)
    out_dir = _required_out(cfg)
    study = synth_study(cfg.synth, cfg.seed)
    manifest = save_study(study, out_dir)
    write_run_info(out_dir, "synth", cfg.seed, config_hash(cfg))
    print(f"wrote {len(study.subject_ids)} subjects; manifest at {manifest}")
    return 0


def cmd_loso(args) -> int:
    cfg = load_experiment_config(
        args.config, seed=args.seed, out=args.out, bank=args.bank
    )
    out_dir = _required_out(cfg)
    jobs = resolve_jobs(args.jobs)
    cfg_hash = config_hash(cfg)
    study = _load_study_source(cfg)
    covs = compute_bank_covariances(study, build_bank(cfg.bank))
    partial = _partial_dir(out_dir)

    results = []
    for test_subject in study.subject_ids:
        folds = loso_folds(covs.subject_ids, test_subject)
        outputs = {}
        pending = []
        for fold in folds:
            path = partial / f"loso_s{test_subject:02d}_f{fold.fold_index:02d}.json"
            doc = _load_partial(path, cfg_hash) if args.resume else None
            if doc is not None:
                outputs[fold.fold_index] = (
                    int(doc["fold_index"]),
                    int(doc["validation_subject"]),
                    tuple(doc["kappas"]),
                )
            else:
                pending.append(fold)
        runner = functools.partial(
            run_fold, covs, settings=cfg.settings, train_cfg=cfg.train, m=cfg.m
        )
        for fold_index, val_subject, kappas in parallel_map(runner, pending, jobs):
            _write_partial(
                partial / f"loso_s{test_subject:02d}_f{fold_index:02d}.json",
                {
                    "config_sha256": cfg_hash,
                    "fold_index": fold_index,
                    "kappas": list(kappas),
                    "test_subject": test_subject,
                    "validation_subject": val_subject,
                },
            )
            outputs[fold_index] = (fold_index, val_subject, kappas)
        result = assemble_loso_result(test_subject, list(outputs.values()))
        results.append(result)
        print(
            f"subject {test_subject}: mean kappa {result.mean:.4f}, "
            f"best setting {result.best_setting + 1}"
        )

    stamp = stamp_line(cfg.seed, cfg_hash)
    csv_path = write_loso_csv(out_dir / "loso.csv", results, stamp)
    write_loso_markdown(out_dir / "loso.md", results, stamp)
    plot_loso_heatmap(out_dir / "loso_heatmap.png", results)
    write_run_info(out_dir, "loso", cfg.seed, cfg_hash)
    print(f"wrote {csv_path}")
    return 0


def cmd_compare(args) -> int:
    cfg = load_experiment_config(
        args.config, seed=args.seed, out=args.out, bank=args.bank
    )
    out_dir = _required_out(cfg)
    jobs = resolve_jobs(args.jobs)
    cfg_hash = config_hash(cfg)
    study = _load_study_source(cfg)
    partial = _partial_dir(out_dir)
    logs_dir = out_dir / "logs"
    logs_dir.mkdir(exist_ok=True)

    sisae_bank = build_bank(cfg.bank)
    cov_cache = {}

    def covariances_for(method: str):
        bank = method_bank(method, sisae_bank)
        key = tuple((b.low_hz, b.high_hz) for b in bank)
        if key not in cov_cache:
            cov_cache[key] = compute_bank_covariances(study, bank)
        return cov_cache[key]

    subject_ids = study.subject_ids
    kappas = np.empty((len(subject_ids), len(cfg.methods)))
    best_settings: dict[int, int] = {}
    for si, subject in enumerate(subject_ids):
        for mi, method in enumerate(cfg.methods):
            path = partial / f"compare_s{subject:02d}_{method}.json"
            doc = _load_partial(path, cfg_hash) if args.resume else None
            if doc is not None:
                kappas[si, mi] = float(doc["kappa"])
                if doc.get("best_setting") is not None:
                    best_settings[subject] = int(doc["best_setting"])
                continue
            best = None
            if method == "sisae":
                evaluation = evaluate_sisae(
                    None,
                    subject,
                    cfg.settings,
                    cfg.train,
                    m=cfg.m,
                    covs=covariances_for(method),
                    n_jobs=jobs,
                )
                kappas[si, mi] = evaluation.kappa
                best = evaluation.best_setting
                best_settings[subject] = best
                write_training_log_csv(
                    logs_dir / f"sisae_s{subject:02d}_training.csv",
                    evaluation.model.log,
                    stamp_line(cfg.seed, cfg_hash),
                )
            else:
                kappas[si, mi] = evaluate_method(
                    study,
                    subject,
                    method,
                    m=cfg.m,
                    mibif_k=cfg.mibif_k,
                    covs=covariances_for(method),
                )
            _write_partial(
                path,
                {
                    "config_sha256": cfg_hash,
                    "kappa": float(kappas[si, mi]),
                    "best_setting": best,
                    "method": method,
                    "subject": subject,
                },
            )
            print(f"subject {subject} {method}: kappa {kappas[si, mi]:.4f}")

    t_tests = []
    if "sisae" in cfg.methods and len(subject_ids) >= 2:
        sisae_col = kappas[:, cfg.methods.index("sisae")]
        for method in cfg.methods:
            if method != "sisae":
                t_tests.append(
                    MethodTTest(
                        method_a="sisae",
                        method_b=method,
                        result=paired_t_test(
                            sisae_col, kappas[:, cfg.methods.index(method)]
                        ),
                    )
                )
    result = CompareResult(
        subject_ids=subject_ids,
        methods=cfg.methods,
        kappas=kappas,
        t_tests=tuple(t_tests),
        best_settings=best_settings,
    )

    stamp = stamp_line(cfg.seed, cfg_hash)
    csv_path = write_compare_csv(out_dir / "compare.csv", result, stamp)
    write_compare_ttest_csv(out_dir / "compare_ttest.csv", result, stamp)
    write_compare_markdown(out_dir / "compare.md", result, stamp)
    plot_compare_bars(out_dir / "compare_bars.png", result)
    write_run_info(out_dir, "compare", cfg.seed, cfg_hash)
    averages = ", ".join(
        f"{method}={value:.4f}"
        for method, value in zip(result.methods, result.averages)
    )
    print(f"averages: {averages}")
    print(f"wrote {csv_path}")
    return 0


def cmd_bank_inspect(args) -> int:
    if args.m < 1:
        raise ConfigError(f"m must be >= 1, got {args.m}")
    bank = build_bank(args.bank)
    lows = [band.low_hz for band in bank]
    highs = [band.high_hz for band in bank]
    print(
        f"bank {args.bank}: {len(bank)} bands covering "
        f"{min(lows)}-{max(highs)} Hz"
    )
    print(f"fused feature length at m={args.m}: {2 * args.m * len(bank)}")
    first, last = bank.bands[0], bank.bands[-1]
    print(f"first band [{first.low_hz}, {first.high_hz}] Hz")
    print(f"last band [{last.low_hz}, {last.high_hz}] Hz")
    if args.fs is not None:
        worst = 0.0
        for band in bank:
            filt = design_butterworth_bandpass(band, args.fs)
            worst = max(worst, float(abs(filt.poles()).max()))
        print(f"all {len(bank)} filters stable at fs={args.fs}; "
              f"max pole magnitude {worst:.6f}")
    if args.all:
        for band in bank:
            print(f"{band.low_hz},{band.high_hz}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
