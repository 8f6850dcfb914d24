"""
Dataset module.

Turns decoded WFDB records into labeled fixed-length segments for the three
tasks (MIT-BIH beats, ECG-ID cycles, Apnea-ECG minutes) and builds
stratified fold plans over segment labels.
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from src.config import (
    AAMI_CLASS_NAMES,
    APNEA_LABELS,
    APNEA_MAX_LOSS_RUN,
    APNEA_MINUTE_SAMPLES,
    ECGID_AFTER_PEAK,
    ECGID_BEFORE_PEAK,
    ECGID_CYCLES_PER_RECORDING,
    MITBIH_HALF_WINDOW,
    SAVGOL_ORDER,
    SAVGOL_WINDOW,
)
from src.dsp import mean_subtract, pan_tompkins_rpeaks, savitzky_golay, zscore
from src.helpers import ConfigurationError
from src.logger import get_logger
from src.wfdb import FORMAT_LIMITS, Record, map_beat_to_aami

logger = get_logger(__name__)


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass
class LabeledSegment:
    samples: np.ndarray  # channels x length
    label: int
    source: Tuple[str, int]  # record id, position in the record
    task: str


@dataclass
class SegmentSet:
    """All segments of one task, stacked for training."""

    task: str
    samples: np.ndarray  # n x channels x length
    labels: np.ndarray
    sources: List[Tuple[str, int]]
    label_names: List[str]

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def from_segments(cls, task: str, segments: Sequence[LabeledSegment], label_names: List[str]) -> "SegmentSet":
        if segments:
            samples = np.stack([s.samples for s in segments]).astype(np.float32)
        else:
            samples = np.empty((0, 1, 0), dtype=np.float32)
        return cls(
            task=task,
            samples=samples,
            labels=np.array([s.label for s in segments], dtype=np.int64),
            sources=[s.source for s in segments],
            label_names=list(label_names),
        )

    def class_counts(self) -> Dict[str, int]:
        counts = np.bincount(self.labels, minlength=len(self.label_names))
        return {name: int(count) for name, count in zip(self.label_names, counts)}


@dataclass
class FoldPlan:
    k: int
    seed: int
    assignments: np.ndarray  # segment index -> fold id
    class_orders: Dict[int, np.ndarray] = field(default_factory=dict)  # seeded shuffle per class


@dataclass
class SplitTriple:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


# ============================================================================
# SEGMENTATION
# ============================================================================

def segment_mitbih(record: Record, diagnostics: Optional[Counter] = None) -> List[LabeledSegment]:
    """
    Cut one 257-sample window (R-peak at index 128) per AAMI-mapped beat.

    Beats closer than 128 samples to either end of the record are skipped.
    Annotations without an AAMI class are counted in ``diagnostics``.

    Args:
        record: Record with beat annotations, channel 0 is used
        diagnostics: Optional counter of skipped annotation symbols

    Returns:
        list: LabeledSegment per kept beat
    """
    lead = record.signals[0]
    n_samples = len(lead)
    half = MITBIH_HALF_WINDOW

    segments = []
    for annotation in record.annotations:
        aami = map_beat_to_aami(annotation.symbol_char)
        if aami is None:
            if diagnostics is not None:
                diagnostics[annotation.symbol_char] += 1
            continue

        r = annotation.sample_index
        if r - half < 0 or r + half >= n_samples:
            if diagnostics is not None:
                diagnostics["<boundary>"] += 1
            continue

        segments.append(LabeledSegment(
            samples=lead[r - half: r + half + 1][np.newaxis, :].copy(),
            label=int(aami),
            source=(record.name, r),
            task="mitbih",
        ))
    return segments


def segment_ecgid(record: Record, label: int) -> List[LabeledSegment]:
    """
    Extract up to eight representative cardiac cycles from an ECG-ID recording.

    Cycles span 80 samples before to 170 after each detected R-peak. The
    cycles closest (Euclidean) to the recording's average cycle are kept and
    mean-subtracted.

    Args:
        record: 500 Hz recording; channel 0 (raw lead) is used
        label: Person index

    Returns:
        list: At most ECGID_CYCLES_PER_RECORDING segments, in time order
    """
    lead = record.signals[0]
    peaks = pan_tompkins_rpeaks(lead, record.sampling_frequency)

    starts = [p - ECGID_BEFORE_PEAK for p in peaks
              if p - ECGID_BEFORE_PEAK >= 0 and p + ECGID_AFTER_PEAK <= len(lead)]
    if not starts:
        logger.warning(f"No complete cardiac cycle found in {record.name}; recording skipped")
        return []

    length = ECGID_BEFORE_PEAK + ECGID_AFTER_PEAK
    cycles = np.stack([lead[s: s + length] for s in starts])
    distances = np.linalg.norm(cycles - cycles.mean(axis=0), axis=1)

    n_keep = min(ECGID_CYCLES_PER_RECORDING, len(cycles))
    keep = np.sort(np.argsort(distances, kind="stable")[:n_keep])

    return [
        LabeledSegment(
            samples=mean_subtract(cycles[i])[np.newaxis, :],
            label=int(label),
            source=(record.name, int(starts[i] + ECGID_BEFORE_PEAK)),
            task="ecgid",
        )
        for i in keep
    ]


def longest_run(values: np.ndarray) -> int:
    """Length of the longest run of identical consecutive values."""
    values = np.asarray(values)
    if values.size == 0:
        return 0
    change = np.flatnonzero(values[1:] != values[:-1])
    bounds = np.concatenate([[-1], change, [values.size - 1]])
    return int(np.diff(bounds).max())


def longest_true_run(mask: np.ndarray) -> int:
    """Length of the longest run of True values."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return 0
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return int((edges[1::2] - edges[0::2]).max())


def signal_loss_run(adc: np.ndarray, storage_format: int = 16) -> int:
    """
    Longest signal-loss run in a window of stored integers: identical
    consecutive values, or consecutive values at the format's limits.
    """
    low, high = FORMAT_LIMITS.get(storage_format, FORMAT_LIMITS[16])
    saturated = (adc <= low) | (adc >= high)
    return max(longest_run(adc), longest_true_run(saturated))


def segment_apnea(record: Record, diagnostics: Optional[Counter] = None) -> List[LabeledSegment]:
    """
    Cut one-minute segments aligned to the per-minute apnea annotations.

    A minute is discarded when it holds a signal-loss run longer than
    APNEA_MAX_LOSS_RUN samples or extends past the end of the record.
    Kept minutes are Savitzky-Golay smoothed and z-scored.

    Args:
        record: 100 Hz recording with ``.apn`` annotations
        diagnostics: Optional counter of discard reasons

    Returns:
        list: Labeled minutes (1 = apnea, 0 = normal)
    """
    lead = record.signals[0]
    adc = record.adc[0]
    storage_format = record.header.signals[0].storage_format
    n_samples = len(lead)

    segments = []
    for annotation in record.annotations:
        label = APNEA_LABELS.get(annotation.symbol_char)
        if label is None:
            if diagnostics is not None:
                diagnostics[annotation.symbol_char] += 1
            continue

        start = annotation.sample_index
        end = start + APNEA_MINUTE_SAMPLES
        if end > n_samples:
            if diagnostics is not None:
                diagnostics["<partial minute>"] += 1
            continue

        if signal_loss_run(adc[start:end], storage_format) > APNEA_MAX_LOSS_RUN:
            if diagnostics is not None:
                diagnostics["<signal loss>"] += 1
            continue

        try:
            minute = zscore(savitzky_golay(lead[start:end], SAVGOL_WINDOW, SAVGOL_ORDER))
        except ValueError:
            if diagnostics is not None:
                diagnostics["<constant minute>"] += 1
            continue

        segments.append(LabeledSegment(
            samples=minute[np.newaxis, :],
            label=label,
            source=(record.name, start),
            task="apnea",
        ))
    return segments


def apnea_label_names() -> List[str]:
    return [name for name, _ in sorted(APNEA_LABELS.items(), key=lambda item: item[1])]


def mitbih_label_names() -> List[str]:
    return list(AAMI_CLASS_NAMES)


# ============================================================================
# FOLDS
# ============================================================================

def stratified_kfold(labels: Sequence[int], k: int, seed: int) -> FoldPlan:
    """
    Assign every segment to one of k folds, stratified by class.

    Within each class the members are shuffled with a seeded generator and
    dealt round-robin; the dealing position carries over from class to class
    so total fold sizes stay balanced too.

    Args:
        labels: Class index per segment
        k: Number of folds
        seed: Shuffle seed

    Returns:
        FoldPlan: Deterministic for a fixed seed

    Raises:
        ConfigurationError: If k < 2
    """
    if k < 2:
        raise ConfigurationError(f"fold count must be at least 2 (got {k})")

    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    assignments = np.full(len(labels), -1, dtype=np.int64)
    class_orders = {}

    cursor = 0
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        if len(members) < k:
            logger.warning(f"Class {label} has {len(members)} members for {k} folds; some folds get none")
        order = rng.permutation(members)
        assignments[order] = (cursor + np.arange(len(order))) % k
        cursor += len(order)
        class_orders[int(label)] = order

    return FoldPlan(k=k, seed=seed, assignments=assignments, class_orders=class_orders)


def make_split(plan: FoldPlan, held_out: int) -> SplitTriple:
    """
    Train on every fold but ``held_out``; split the held-out fold into
    validation and test halves.

    Members of the held-out fold are visited class by class in their
    shuffled order and dealt alternately to validation and test, the
    alternation continuing across classes so both halves differ in size by
    at most one overall and per class.

    Raises:
        ConfigurationError: If held_out is not a fold id of the plan
    """
    if not 0 <= held_out < plan.k:
        raise ConfigurationError(f"fold {held_out} is outside 0..{plan.k - 1}")

    validation, test = [], []
    position = 0
    for label in sorted(plan.class_orders):
        order = plan.class_orders[label]
        for index in order[plan.assignments[order] == held_out]:
            (validation if position % 2 == 0 else test).append(int(index))
            position += 1

    train = np.flatnonzero(plan.assignments != held_out)
    return SplitTriple(
        train=train,
        validation=np.sort(np.asarray(validation, dtype=np.int64)),
        test=np.sort(np.asarray(test, dtype=np.int64)),
    )
