"""Run artifacts: stamped CSV tables, Markdown summaries, and figures.

Every table starts with a comment line carrying the seed, the config hash
and the package version, so any artifact can be traced back to the exact
run that produced it. Writers are deterministic: fixed float formats, fixed
line terminators, no timestamps.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from ._version import __version__
from .evaluation import CompareResult, LosoResult

KAPPA_FMT = "{:.4f}"


def stamp_line(seed: int, cfg_hash: str) -> str:
    return f"# seed={seed} config_sha256={cfg_hash} version={__version__}"


def write_run_info(out_dir: str | Path, command: str, seed: int, cfg_hash: str) -> Path:
    """Machine-readable run stamp; no timestamps, so reruns are identical."""
    path = Path(out_dir) / "run_info.json"
    doc = {
        "command": command,
        "config_sha256": cfg_hash,
        "seed": seed,
        "version": __version__,
    }
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return path


def _open_stamped_csv(path: Path, stamp: str):
    fh = open(path, "w", newline="")
    fh.write(stamp + "\n")
    return fh, csv.writer(fh, lineterminator="\n")


def write_loso_csv(
    path: str | Path, results: Sequence[LosoResult], stamp: str
) -> Path:
    """Per-subject per-setting mean kappas with row mean/std and best setting."""
    path = Path(path)
    n_settings = results[0].fold_kappas.shape[0] if results else 0
    fh, writer = _open_stamped_csv(path, stamp)
    with fh:
        writer.writerow(
            ["subject"]
            + [f"setting_{i + 1}" for i in range(n_settings)]
            + ["mean", "std", "best_setting"]
        )
        for res in results:
            writer.writerow(
                [res.test_subject]
                + [KAPPA_FMT.format(v) for v in res.setting_means]
                + [
                    KAPPA_FMT.format(res.mean),
                    KAPPA_FMT.format(res.std),
                    res.best_setting + 1,
                ]
            )
    return path


def write_loso_markdown(
    path: str | Path, results: Sequence[LosoResult], stamp: str
) -> Path:
    path = Path(path)
    n_settings = results[0].fold_kappas.shape[0] if results else 0
    lines = [
        "# Cross-validation mean kappa by setting",
        "",
        stamp,
        "",
        "| Subject | "
        + " | ".join(f"Setting {i + 1}" for i in range(n_settings))
        + " | Mean | Std |",
        "|" + "---|" * (n_settings + 3),
    ]
    for res in results:
        cells = " | ".join(KAPPA_FMT.format(v) for v in res.setting_means)
        lines.append(
            f"| {res.test_subject} | {cells} | "
            f"{KAPPA_FMT.format(res.mean)} | {KAPPA_FMT.format(res.std)} |"
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def plot_loso_heatmap(path: str | Path, results: Sequence[LosoResult]) -> Path:
    """Subjects x settings matrix of cross-validation mean kappas."""
    path = Path(path)
    matrix = np.array([res.setting_means for res in results])
    subjects = [res.test_subject for res in results]
    n_settings = matrix.shape[1]
    fig, ax = plt.subplots(
        figsize=(1.5 + 0.9 * n_settings, 1.2 + 0.45 * len(results))
    )
    image = ax.imshow(matrix, cmap="viridis", aspect="auto")
    ax.set_xticks(range(n_settings), [f"S{i + 1}" for i in range(n_settings)])
    ax.set_yticks(range(len(subjects)), [str(s) for s in subjects])
    ax.set_xlabel("network setting")
    ax.set_ylabel("test subject")
    ax.set_title("Cross-validation mean kappa")
    for i in range(matrix.shape[0]):
        for j in range(n_settings):
            ax.text(
                j,
                i,
                KAPPA_FMT.format(matrix[i, j]),
                ha="center",
                va="center",
                fontsize=7,
                color="white",
            )
    fig.colorbar(image, ax=ax, shrink=0.9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def write_compare_csv(path: str | Path, result: CompareResult, stamp: str) -> Path:
    """Per-subject kappa per method plus the average row."""
    path = Path(path)
    fh, writer = _open_stamped_csv(path, stamp)
    with fh:
        writer.writerow(["subject"] + list(result.methods))
        for si, subject in enumerate(result.subject_ids):
            writer.writerow(
                [subject] + [KAPPA_FMT.format(v) for v in result.kappas[si]]
            )
        writer.writerow(["avg"] + [KAPPA_FMT.format(v) for v in result.averages])
    return path


def write_compare_ttest_csv(
    path: str | Path, result: CompareResult, stamp: str
) -> Path:
    path = Path(path)
    fh, writer = _open_stamped_csv(path, stamp)
    with fh:
        writer.writerow(["comparison", "t", "p", "df"])
        for tt in result.t_tests:
            writer.writerow(
                [
                    f"{tt.method_a}_vs_{tt.method_b}",
                    f"{tt.result.t:.4f}",
                    f"{tt.result.p:.3e}",
                    tt.result.df,
                ]
            )
    return path


def write_compare_markdown(
    path: str | Path, result: CompareResult, stamp: str
) -> Path:
    path = Path(path)
    lines = [
        "# Held-out test kappa by method",
        "",
        stamp,
        "",
        "| Subject | " + " | ".join(m.upper() for m in result.methods) + " |",
        "|" + "---|" * (len(result.methods) + 1),
    ]
    for si, subject in enumerate(result.subject_ids):
        cells = " | ".join(KAPPA_FMT.format(v) for v in result.kappas[si])
        lines.append(f"| {subject} | {cells} |")
    lines.append(
        "| Avg. | "
        + " | ".join(KAPPA_FMT.format(v) for v in result.averages)
        + " |"
    )
    if result.t_tests:
        lines += ["", "## Paired t-tests", ""]
        for tt in result.t_tests:
            lines.append(
                f"- {tt.method_a} vs {tt.method_b}: "
                f"t = {tt.result.t:.4f}, p = {tt.result.p:.3e}, "
                f"df = {tt.result.df}"
            )
    path.write_text("\n".join(lines) + "\n")
    return path


def plot_compare_bars(path: str | Path, result: CompareResult) -> Path:
    """Grouped bars: one group per subject plus the average group."""
    path = Path(path)
    groups = [str(s) for s in result.subject_ids] + ["avg"]
    values = np.vstack([result.kappas, result.averages])
    n_methods = len(result.methods)
    x = np.arange(len(groups))
    width = 0.8 / n_methods
    fig, ax = plt.subplots(figsize=(1.5 + 0.75 * len(groups), 4.0))
    for mi, method in enumerate(result.methods):
        offset = (mi - (n_methods - 1) / 2) * width
        ax.bar(x + offset, values[:, mi], width, label=method.upper())
    ax.set_xticks(x, groups)
    ax.set_xlabel("test subject")
    ax.set_ylabel("kappa")
    ax.set_title("Held-out test kappa by method")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def write_training_log_csv(
    path: str | Path, log: np.ndarray, stamp: str | None = None
) -> Path:
    """Per-epoch loss components of one training run."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        if stamp is not None:
            fh.write(stamp + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["epoch", "total", "classification", "reconstruction", "regularization"]
        )
        for row in np.asarray(log):
            writer.writerow(
                [int(row[0])] + [f"{v:.10e}" for v in row[1:]]
            )
    return path
