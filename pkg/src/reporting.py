"""
Reporting Module for the ECG study.

This module handles:
1. Consolidating fold reports of every study under an output directory
2. Rendering accuracy/AUC tables (rows = architectures, columns = tasks)
3. Rendering one-tailed t-test p-value matrices per task
4. Static SVG plots: ROC curves per fold, accuracy bars with error whiskers,
   example segments, FFT components and spectrogram images

Usage:
    python src/reporting.py
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns
from sklearn.metrics import roc_curve
from sklearn.preprocessing import label_binarize
from src.config import (
    ARCHITECTURES,
    FOLD_REPORT_COLUMNS,
    FOLD_REPORTS_FILE,
    OUTPUT_DIR,
    PREDICTIONS_TEMPLATE,
    TASK_NAMES,
)
from src.dataset import SegmentSet
from src.dsp import fft_real_imag
from src.evaluation import StudySummary
from src.features import spectrogram_images
from src.helpers import ConfigurationError, atomic_write_bytes, load_dataframe, save_dataframe
from src.logger import get_logger

logger = get_logger(__name__)

# Set plotting style
sns.set_style("whitegrid")
plt.rcParams["figure.dpi"] = 100
plt.rcParams["figure.figsize"] = (10, 6)
plt.rcParams["svg.hashsalt"] = "ecg-study"

ARCH_LABELS: Dict[str, str] = {"cnn1d": "CNN1D", "fft1d": "FFT1D", "fan": "FAN", "cfan": "CFAN"}
TASK_LABELS: Dict[str, str] = {"mitbih": "MIT-BIH", "ecgid": "ECG-ID", "apnea": "Apnea-ECG"}


def _save_svg(file_path: Path) -> None:
    file_path.parent.mkdir(parents=True, exist_ok=True)
    plt.tight_layout()
    plt.savefig(file_path, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close()
    logger.info(f"Plot saved to {file_path}")


# ============================================================================
# TABLES
# ============================================================================

def collect_studies(root: Path) -> StudySummary:
    """
    Merge the fold reports of every study below ``root``.

    Studies are visited in sorted path order; a (task, arch) pair already
    seen in an earlier study is ignored with a warning.

    Raises:
        ConfigurationError: No fold reports found
    """
    paths = sorted(Path(root).rglob(FOLD_REPORTS_FILE))
    if not paths:
        raise ConfigurationError(f"No completed studies found under {root}")

    frames = []
    seen = set()
    for path in paths:
        frame = load_dataframe(path)
        keys = set(zip(frame["task"], frame["arch"]))
        duplicate = keys & seen
        if duplicate:
            logger.warning(f"{path}: results for {sorted(duplicate)} already loaded, ignoring them")
            frame = frame[[(t, a) not in duplicate for t, a in zip(frame["task"], frame["arch"])]]
        seen |= keys
        frames.append(frame[FOLD_REPORT_COLUMNS])

    merged = pd.concat(frames, ignore_index=True)
    logger.info(f"Collected {len(merged)} fold reports from {len(paths)} studies")
    return StudySummary.from_frame(merged)


def _ordered(values: Sequence[str], reference: List[str]) -> List[str]:
    return sorted(set(values), key=lambda v: (reference.index(v) if v in reference else len(reference), v))


def render_metric_table(summary: StudySummary, metric: str = "acc") -> pd.DataFrame:
    """
    Percent mean ± std table, architectures as rows and tasks as columns.

    Args:
        summary: Merged fold reports
        metric: "acc" or "auc"

    Returns:
        pd.DataFrame: Cells like "98.80±0.30"; missing pairs are "-"
    """
    frame = summary.summary_frame()
    archs = _ordered(frame["arch"], ARCHITECTURES)
    tasks = _ordered(frame["task"], TASK_NAMES)

    table = pd.DataFrame("-", index=[ARCH_LABELS.get(a, a) for a in archs],
                         columns=[TASK_LABELS.get(t, t) for t in tasks])
    for row in frame.to_dict("records"):
        mean, std = 100 * row[f"{metric}_mean"], 100 * row[f"{metric}_std"]
        cell = f"{mean:.2f}±{std:.2f}" if np.isfinite(std) else f"{mean:.2f}"
        table.loc[ARCH_LABELS.get(row["arch"], row["arch"]), TASK_LABELS.get(row["task"], row["task"])] = cell
    table.index.name = "architecture"
    return table


def render_pvalue_matrices(summary: StudySummary, metric: str = "acc") -> Dict[str, pd.DataFrame]:
    """p-value matrix per task; entry (row, col) tests mean(row) > mean(col)."""
    tasks = _ordered([task for task, _ in summary.pairs()], TASK_NAMES)
    matrices = {}
    for task in tasks:
        matrix = summary.pvalue_matrix(task, metric)
        matrix.index = [ARCH_LABELS.get(a, a) for a in matrix.index]
        matrix.columns = [ARCH_LABELS.get(a, a) for a in matrix.columns]
        matrix.index.name = "better"
        matrices[task] = matrix
    return matrices


def write_report(root: Path, out_dir: Optional[Path] = None) -> List[Path]:
    """
    Render the consolidated tables of every study under ``root``.

    Writes ``table_accuracy.csv``, ``table_auc.csv``, ``pvalues_<task>.csv``
    and a plain-text ``tables.txt`` holding all of them.

    Returns:
        list: Written file paths
    """
    out_dir = Path(out_dir or root)
    summary = collect_studies(root)

    logger.info("=" * 60)
    logger.info("Rendering study tables")
    logger.info("=" * 60)

    written = []
    sections = []
    for metric, title in (("acc", "MEAN AND STANDARD DEVIATION OF ACCURACY (%)"),
                          ("auc", "MEAN AND STANDARD DEVIATION OF AUC (%)")):
        table = render_metric_table(summary, metric)
        path = out_dir / f"table_{'accuracy' if metric == 'acc' else 'auc'}.csv"
        save_dataframe(table.reset_index(), path)
        written.append(path)
        sections.append(f"{title}\n{table.to_string()}\n")

    for task, matrix in render_pvalue_matrices(summary).items():
        path = out_dir / f"pvalues_{task}.csv"
        save_dataframe(matrix.reset_index(), path, float_format="%.6g")
        written.append(path)
        sections.append(
            f"P-VALUES FROM THE ONE-TAILED T-TEST, {TASK_LABELS.get(task, task)} (row > column)\n"
            f"{matrix.to_string(float_format=lambda v: f'{v:.4g}', na_rep='-')}\n"
        )

    text_path = out_dir / "tables.txt"
    atomic_write_bytes(text_path, "\n".join(sections).encode("utf-8"))
    written.append(text_path)

    print("\n".join(sections))
    logger.info(f"✓ Report written to {out_dir}")
    return written


# ============================================================================
# PLOTS
# ============================================================================

def roc_points(probabilities: np.ndarray, labels: np.ndarray):
    """
    (fpr, tpr) of one fold: the positive column for two classes, the
    micro-average over one-vs-rest indicators otherwise.
    """
    n_classes = probabilities.shape[1]
    if n_classes == 2:
        fpr, tpr, _ = roc_curve(labels, probabilities[:, 1])
    else:
        indicators = label_binarize(labels, classes=np.arange(n_classes))
        fpr, tpr, _ = roc_curve(indicators.ravel(), probabilities.ravel())
    return fpr, tpr


def plot_roc_curves(out_dir: Path, task: str, architectures: Sequence[str], folds: int) -> List[Path]:
    """One SVG per architecture with a ROC curve for each stored test fold."""
    written = []
    for arch in architectures:
        plt.figure(figsize=(7, 6))
        drawn = 0
        for fold in range(folds):
            path = out_dir / "predictions" / PREDICTIONS_TEMPLATE.format(arch=arch, fold=fold)
            if not path.exists():
                continue
            with np.load(path) as stored:
                probabilities, labels = stored["probabilities"], stored["labels"]
            if len(np.unique(labels)) < 2:
                logger.warning(f"{arch} fold {fold}: single-class test fold, no ROC curve")
                continue
            fpr, tpr = roc_points(probabilities, labels)
            plt.plot(fpr, tpr, linewidth=1.2, label=f"fold {fold}")
            drawn += 1

        if not drawn:
            plt.close()
            logger.warning(f"No predictions found for {task}/{arch}; ROC plot skipped")
            continue

        plt.plot([0, 1], [0, 1], linestyle="--", color="grey", linewidth=0.8)
        plt.xlabel("False positive rate")
        plt.ylabel("True positive rate")
        plt.title(f"ROC curves - {ARCH_LABELS.get(arch, arch)} on {TASK_LABELS.get(task, task)}")
        plt.legend(loc="lower right", fontsize=8)
        target = out_dir / f"roc_{task}_{arch}.svg"
        _save_svg(target)
        written.append(target)
    return written


def plot_accuracy_bars(summary: pd.DataFrame, file_path: Path) -> Path:
    """Mean accuracy per architecture (and task) with standard-deviation whiskers."""
    frame = summary.copy()
    frame["architecture"] = [ARCH_LABELS.get(a, a) for a in frame["arch"]]
    frame["dataset"] = [TASK_LABELS.get(t, t) for t in frame["task"]]
    frame["accuracy"] = 100 * frame["acc_mean"]
    frame["std"] = 100 * frame["acc_std"].fillna(0.0)

    tasks = list(dict.fromkeys(frame["dataset"]))
    archs = list(dict.fromkeys(frame["architecture"]))
    width = 0.8 / max(len(tasks), 1)
    colors = sns.color_palette("deep", len(tasks))

    plt.figure(figsize=(8, 5))
    positions = np.arange(len(archs))
    for offset, (task, color) in enumerate(zip(tasks, colors)):
        rows = frame[frame["dataset"] == task].set_index("architecture").reindex(archs)
        plt.bar(positions + offset * width, rows["accuracy"], width, yerr=rows["std"],
                capsize=4, color=color, label=task)
    plt.xticks(positions + width * (len(tasks) - 1) / 2, archs)
    plt.ylabel("Accuracy (%)")
    plt.ylim(max(0.0, float(np.nanmin(frame["accuracy"] - frame["std"])) - 5), 100)
    plt.title("Cross-validated accuracy")
    if len(tasks) > 1:
        plt.legend()
    plt.grid(axis="x", alpha=0.3)
    _save_svg(file_path)
    return file_path


def plot_segment_examples(segments: SegmentSet, file_path: Path, per_class: int = 1) -> Path:
    """First ``per_class`` segments of each class (at most 10 classes)."""
    classes = list(range(min(len(segments.label_names), 10)))
    fig, axes = plt.subplots(len(classes), 1, figsize=(10, 2 * len(classes)), squeeze=False)
    for axis, cls in zip(axes[:, 0], classes):
        members = np.flatnonzero(segments.labels == cls)[:per_class]
        for index in members:
            axis.plot(segments.samples[index, 0], linewidth=0.8)
        axis.set_ylabel(segments.label_names[cls])
    axes[0, 0].set_title(f"Example segments - {TASK_LABELS.get(segments.task, segments.task)}")
    axes[-1, 0].set_xlabel("Sample")
    _save_svg(file_path)
    return file_path


def plot_fft_components(segment: np.ndarray, file_path: Path) -> Path:
    """Real and imaginary parts of the one-sided spectrum of one segment."""
    spectrum = fft_real_imag(np.asarray(segment).ravel())
    fig, axes = plt.subplots(2, 1, figsize=(10, 5), sharex=True)
    axes[0].plot(spectrum.real, linewidth=0.8)
    axes[0].set_ylabel("Real")
    axes[1].plot(spectrum.imag, linewidth=0.8, color="tab:orange")
    axes[1].set_ylabel("Imaginary")
    axes[1].set_xlabel("Frequency bin")
    axes[0].set_title("FFT components")
    _save_svg(file_path)
    return file_path


def plot_spectrograms(segments: np.ndarray, file_path: Path, n_images: int = 4) -> Path:
    """64 x 64 grayscale spectrograms of the first ``n_images`` segments."""
    images = spectrogram_images(np.asarray(segments)[:n_images])
    fig, axes = plt.subplots(1, len(images), figsize=(3 * len(images), 3), squeeze=False)
    for axis, image in zip(axes[0], images):
        axis.imshow(image, cmap="gray", origin="lower", aspect="auto")
        axis.set_xticks([])
        axis.set_yticks([])
    _save_svg(file_path)
    return file_path


def plot_task_figures(segments: SegmentSet, out_dir: Path) -> List[Path]:
    """Example segments, FFT components and spectrograms for one task."""
    if len(segments) == 0:
        raise ConfigurationError(f"No segments for task '{segments.task}'")
    task = segments.task
    return [
        plot_segment_examples(segments, out_dir / f"segments_{task}.svg"),
        plot_fft_components(segments.samples[0, 0], out_dir / f"fft_{task}.svg"),
        plot_spectrograms(segments.samples, out_dir / f"spectrograms_{task}.svg"),
    ]


def main():
    """Render tables for every study under the output directory."""
    write_report(OUTPUT_DIR)


if __name__ == "__main__":
    main()
