"""
Evaluation module.

Fold metrics (ROC-AUC, one-vs-rest macro AUC, argmax accuracy, accuracy at
the equal error rate), k-fold aggregation as mean ± sample standard
deviation, and one-tailed pooled-variance Student t-tests between
architectures.
"""

from dataclasses import asdict, dataclass, field
from itertools import permutations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.metrics import roc_curve
from src.config import ARCHITECTURES, FOLD_REPORT_COLUMNS, SUMMARY_COLUMNS, TASK_NAMES
from src.helpers import ConfigurationError
from src.logger import get_logger

logger = get_logger(__name__)

# (better, worse): the comparisons tabulated by the study
COMPARISON_PAIRS: List[Tuple[str, str]] = [
    ("cnn1d", "spect"),
    ("cnn1d", "fft1d"),
    ("cfan", "cnn1d"),
    ("cfan", "fan"),
]

PVALUE_COLUMNS: List[str] = ["task", "metric", "better", "worse", "p_value"]


# ============================================================================
# METRICS
# ============================================================================

def _binary_inputs(scores, labels) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError(f"{len(scores)} scores for {len(labels)} labels")
    positives = labels == 1
    if not positives.any() or positives.all():
        raise ValueError("both classes must be present to score a binary ranking")
    return scores, positives


def roc_auc_binary(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    Area under the ROC curve as the Mann-Whitney statistic.

    P(score+ > score-) + 0.5 P(tie), from average ranks.

    Args:
        scores: Higher means more likely positive
        labels: 1 for positive, anything else negative

    Returns:
        float: AUC in [0, 1]

    Raises:
        ValueError: If only one class is present
    """
    scores, positives = _binary_inputs(scores, labels)
    n_pos = int(positives.sum())
    n_neg = len(scores) - n_pos

    ranks = stats.rankdata(scores)
    rank_sum = ranks[positives].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def macro_ovr_auc(probabilities: np.ndarray, labels: Sequence[int]) -> float:
    """
    Unweighted mean over classes of the one-vs-rest AUC of each probability
    column.

    Classes absent from ``labels`` (or making up all of it) are skipped with
    a warning.

    Raises:
        ValueError: If no class can be scored
    """
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels)
    if probabilities.ndim != 2 or probabilities.shape[1] < 2:
        raise ValueError(f"expected an n x classes probability matrix, got {probabilities.shape}")

    aucs = []
    skipped = []
    for cls in range(probabilities.shape[1]):
        indicator = (labels == cls).astype(np.int64)
        if indicator.all() or not indicator.any():
            skipped.append(cls)
            continue
        aucs.append(roc_auc_binary(probabilities[:, cls], indicator))

    if skipped:
        logger.warning(f"Macro AUC skipped {len(skipped)} classes absent from the labels")
    if not aucs:
        raise ValueError("no class could be scored one-vs-rest")
    return float(np.mean(aucs))


def accuracy_argmax(probabilities: np.ndarray, labels: Sequence[int]) -> float:
    """Fraction of rows whose argmax (lowest index on ties) is the label."""
    probabilities = np.asarray(probabilities)
    labels = np.asarray(labels)
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(np.argmax(probabilities, axis=1) == labels))


def eer_accuracy(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    1 - EER, the equal error rate found by sweeping every distinct score as
    a threshold and interpolating linearly where FPR and FNR cross.

    Raises:
        ValueError: If only one class is present
    """
    scores, positives = _binary_inputs(scores, labels)
    fpr, tpr, _ = roc_curve(positives.astype(np.int64), scores, drop_intermediate=False)
    fnr = 1.0 - tpr

    gap = fpr - fnr  # -1 at the +inf threshold, +1 at the lowest
    cross = int(np.argmax(gap >= 0))
    if gap[cross] == 0 or cross == 0:
        eer = fpr[cross]
    else:
        before, after = gap[cross - 1], gap[cross]
        weight = before / (before - after)
        eer = fpr[cross - 1] + weight * (fpr[cross] - fpr[cross - 1])
    return float(1.0 - eer)


# ============================================================================
# AGGREGATION AND SIGNIFICANCE
# ============================================================================

def aggregate(values: Sequence[float]) -> Tuple[float, float]:
    """
    Mean and sample (n-1) standard deviation of per-fold values.

    Raises:
        ValueError: Fewer than two folds
    """
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2:
        raise ValueError(f"need at least 2 folds to aggregate, got {len(values)}")
    return float(values.mean()), float(values.std(ddof=1))


def t_test_one_tailed(a: Sequence[float], b: Sequence[float]) -> float:
    """
    p-value of the pooled-variance Student t-test for mean(a) > mean(b).

    Zero pooled variance saturates: 0.5 for equal means, otherwise 0 or 1.

    Args:
        a: Per-fold values of the supposedly better model
        b: Per-fold values of the other model

    Returns:
        float: Upper-tail probability with n_a + n_b - 2 degrees of freedom

    Raises:
        ValueError: Fewer than two values on either side
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least 2 values")

    dof = len(a) + len(b) - 2
    pooled = ((len(a) - 1) * a.var(ddof=1) + (len(b) - 1) * b.var(ddof=1)) / dof
    diff = a.mean() - b.mean()
    se = np.sqrt(pooled * (1.0 / len(a) + 1.0 / len(b)))

    if se == 0:
        if diff == 0:
            return 0.5
        return 0.0 if diff > 0 else 1.0
    return float(stats.t.sf(diff / se, dof))


# ============================================================================
# REPORTS
# ============================================================================

@dataclass
class FoldReport:
    task: str
    arch: str
    fold: int
    auc: float
    acc: float
    n_test: int

    def __post_init__(self):
        for name in ("auc", "acc"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    def to_dict(self) -> Dict:
        return asdict(self)


def score_fold(task: str, probabilities: np.ndarray, labels: np.ndarray) -> Tuple[float, float]:
    """
    (auc, accuracy) of one test fold.

    Apnea is scored on the positive-class column (ROC-AUC, EER accuracy);
    the multi-class tasks use one-vs-rest macro AUC and argmax accuracy.
    """
    if task == "apnea":
        scores = probabilities[:, 1]
        return roc_auc_binary(scores, labels), eer_accuracy(scores, labels)
    return macro_ovr_auc(probabilities, labels), accuracy_argmax(probabilities, labels)


def _arch_order(arch: str) -> int:
    return ARCHITECTURES.index(arch) if arch in ARCHITECTURES else len(ARCHITECTURES)


def _task_order(task: str) -> int:
    return TASK_NAMES.index(task) if task in TASK_NAMES else len(TASK_NAMES)


@dataclass
class StudySummary:
    """Fold reports of one or more studies and their derived tables."""

    reports: List[FoldReport] = field(default_factory=list)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "StudySummary":
        return cls([FoldReport(**{k: row[k] for k in FOLD_REPORT_COLUMNS})
                    for row in frame.to_dict("records")])

    def fold_frame(self) -> pd.DataFrame:
        rows = sorted((r.to_dict() for r in self.reports),
                      key=lambda r: (_task_order(r["task"]), r["task"], _arch_order(r["arch"]), r["arch"], r["fold"]))
        return pd.DataFrame(rows, columns=FOLD_REPORT_COLUMNS)

    def values(self, task: str, arch: str, metric: str = "acc") -> np.ndarray:
        ordered = sorted((r for r in self.reports if r.task == task and r.arch == arch), key=lambda r: r.fold)
        return np.array([getattr(r, metric) for r in ordered], dtype=np.float64)

    def pairs(self) -> List[Tuple[str, str]]:
        keys = {(r.task, r.arch) for r in self.reports}
        return sorted(keys, key=lambda k: (_task_order(k[0]), k[0], _arch_order(k[1]), k[1]))

    def summary_frame(self) -> pd.DataFrame:
        """Mean ± sample std per (task, arch); single-fold studies get a NaN std."""
        rows = []
        for task, arch in self.pairs():
            row = {"task": task, "arch": arch}
            for metric in ("auc", "acc"):
                values = self.values(task, arch, metric)
                if len(values) >= 2:
                    row[f"{metric}_mean"], row[f"{metric}_std"] = aggregate(values)
                else:
                    logger.warning(f"{task}/{arch}: {len(values)} fold(s), standard deviation undefined")
                    row[f"{metric}_mean"], row[f"{metric}_std"] = float(values.mean()), float("nan")
            rows.append(row)
        return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)

    def pvalue(self, task: str, better: str, worse: str, metric: str = "acc") -> Optional[float]:
        a = self.values(task, better, metric)
        b = self.values(task, worse, metric)
        if len(a) < 2 or len(b) < 2:
            return None
        return t_test_one_tailed(a, b)

    def pvalue_frame(self, metric: str = "acc", all_pairs: bool = False) -> pd.DataFrame:
        """
        One row per tested comparison. Pairs lacking results on either side
        are left out, so the spectrogram baseline never appears here.
        """
        rows = []
        tasks = sorted({task for task, _ in self.pairs()}, key=lambda t: (_task_order(t), t))
        for task in tasks:
            archs = [arch for t, arch in self.pairs() if t == task]
            candidates = list(permutations(archs, 2)) if all_pairs else COMPARISON_PAIRS
            for better, worse in candidates:
                p = self.pvalue(task, better, worse, metric)
                if p is not None:
                    rows.append({"task": task, "metric": metric, "better": better, "worse": worse, "p_value": p})
        return pd.DataFrame(rows, columns=PVALUE_COLUMNS)

    def pvalue_matrix(self, task: str, metric: str = "acc") -> pd.DataFrame:
        """Square matrix: entry (row, col) tests mean(row) > mean(col)."""
        archs = [arch for t, arch in self.pairs() if t == task]
        if not archs:
            raise ConfigurationError(f"no results for task '{task}'")
        matrix = pd.DataFrame(np.nan, index=archs, columns=archs)
        for better, worse in permutations(archs, 2):
            p = self.pvalue(task, better, worse, metric)
            if p is not None:
                matrix.loc[better, worse] = p
        return matrix
