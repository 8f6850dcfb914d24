"""
Model Training Module for the ECG study.

This module handles:
1. Training configuration (per-task defaults, overridable)
2. Mini-batch Adam training with per-epoch seeded shuffling
3. Early stopping on validation loss with best-weight restoration
4. Stratified k-fold cross-validation studies with resumable per-fold
   artifacts (reports, histories, predictions, checkpoints)

Usage:
    python src/modeling.py
"""

import io
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm
from src import __version__
from src.config import (
    ARCHITECTURES,
    CHECKPOINT_SUFFIX,
    FOLD_REPORTS_FILE,
    HISTORY_COLUMNS,
    HISTORY_TEMPLATE,
    LEARNING_RATE,
    MANIFEST_FILE,
    MAX_EPOCHS,
    N_JOBS,
    PREDICTIONS_TEMPLATE,
    PVALUES_FILE,
    RANDOM_SEED,
    SUMMARY_COLUMNS,
    SUMMARY_FILE,
    FOLD_REPORT_COLUMNS,
    TRAIN_DTYPE,
    VALIDATION_FREQUENCY,
    VALIDATION_PATIENCE,
    task_settings,
)
from src.dataset import SegmentSet, make_split, stratified_kfold
from src.evaluation import FoldReport, StudySummary, score_fold
from src.helpers import (
    ConfigurationError,
    atomic_write_bytes,
    load_json,
    save_dataframe,
    save_json,
)
from src.logger import get_logger
from src.models import Model, build_model, model_spec, predict_encoded, save_model
from src.reporting import plot_accuracy_bars, plot_roc_curves
from src.tensor import AdamState, Tensor, adam_step, backward, cross_entropy

logger = get_logger(__name__)


# ============================================================================
# CONFIGURATION
# ============================================================================

@dataclass
class TrainConfig:
    """
    Hyperparameters of one training run. The optimizer is always Adam.

    Attributes:
        batch_size: Segments per step; a final partial batch is kept
        learning_rate: Adam step size
        max_epochs: Hard epoch limit
        patience: Validation checks without a new minimum before stopping
        validation_frequency: Epochs between validation checks
        seed: Base seed for shuffling (epoch e uses seed + e)
        dtype: "float32" or "float64"
    """

    batch_size: int
    learning_rate: float = LEARNING_RATE
    max_epochs: int = MAX_EPOCHS
    patience: int = VALIDATION_PATIENCE
    validation_frequency: int = VALIDATION_FREQUENCY
    seed: int = RANDOM_SEED
    dtype: str = TRAIN_DTYPE

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """
        Raises:
            ConfigurationError: Non-positive values, patience above max_epochs,
                or an unsupported dtype
        """
        for name in ("batch_size", "learning_rate", "max_epochs", "patience", "validation_frequency"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive (got {getattr(self, name)})")
        if self.patience > self.max_epochs:
            raise ConfigurationError(f"patience {self.patience} exceeds max_epochs {self.max_epochs}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError(f"dtype must be float32 or float64 (got {self.dtype})")

    @classmethod
    def for_task(cls, task: str, **overrides) -> "TrainConfig":
        """Task defaults; overrides set to None are ignored."""
        values = {"batch_size": task_settings(task)["batch_size"]}
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class TrainHistory:
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    val_acc: List[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def __len__(self) -> int:
        return len(self.train_loss)

    def record(self, train_loss: float, val_loss: float, val_acc: float) -> None:
        self.train_loss.append(float(train_loss))
        self.val_loss.append(float(val_loss))
        self.val_acc.append(float(val_acc))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "epoch": np.arange(1, len(self) + 1),
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_acc": self.val_acc,
        }, columns=HISTORY_COLUMNS)


class EarlyStopping:
    """
    Tracks the minimum validation loss and the parameters that produced it.

    Attributes:
        patience: Non-improving checks tolerated
        best_loss: Lowest loss seen
        best_epoch: 1-based epoch of best_loss
        best_state: Snapshot taken at best_epoch
    """

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = 0
        self.best_state: Optional[Dict[str, np.ndarray]] = None
        self.wait = 0

    def update(self, epoch: int, loss: float, snapshot: Callable[[], Dict[str, np.ndarray]]) -> bool:
        """
        Record one validation check.

        Returns:
            bool: True when training should stop
        """
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            self.best_state = snapshot()
            self.wait = 0
            return False
        self.wait += 1
        return self.wait >= self.patience


# ============================================================================
# TRAINING
# ============================================================================

class ModelTrainer:
    """
    Trains one model with Adam and early stopping.

    Attributes:
        config: Training hyperparameters
        progress: Show a tqdm bar over epochs
    """

    def __init__(self, config: TrainConfig, progress: bool = False):
        self.config = config
        self.progress = progress

    def train_step(self, model: Model, inputs: np.ndarray, labels: np.ndarray, state: AdamState) -> float:
        """One Adam update on one batch; returns the batch loss before the update."""
        loss = cross_entropy(model(Tensor(inputs)), labels)
        backward(loss)
        adam_step(state, model.parameters())
        return float(loss.data)

    def evaluate(self, model: Model, inputs: np.ndarray, labels: np.ndarray) -> Tuple[float, float]:
        """
        (mean cross-entropy, argmax accuracy) on encoded inputs, without
        recording a graph.
        """
        probs = predict_encoded(model, inputs, self.config.batch_size)
        loss = float(cross_entropy(Tensor(probs), labels).data)
        accuracy = float(np.mean(np.argmax(probs, axis=1) == labels))
        return loss, accuracy

    def train(
        self,
        model: Model,
        train_segments: np.ndarray,
        train_labels: np.ndarray,
        val_segments: np.ndarray,
        val_labels: np.ndarray,
    ) -> TrainHistory:
        """
        Train in place and restore the best-validation parameters.

        Args:
            model: Freshly built model
            train_segments: (n, 1, length) time-domain segments
            train_labels: Class per training segment
            val_segments: Validation segments; when empty the training loss
                is monitored instead
            val_labels: Class per validation segment

        Returns:
            TrainHistory: One row per completed epoch

        Raises:
            ConfigurationError: Empty training set
        """
        cfg = self.config
        if len(train_labels) == 0:
            raise ConfigurationError("training set is empty")

        model.astype(cfg.dtype)
        train_x = model.encode(train_segments).astype(cfg.dtype)
        train_y = np.asarray(train_labels, dtype=np.int64)
        val_x = model.encode(val_segments).astype(cfg.dtype) if len(val_labels) else None
        val_y = np.asarray(val_labels, dtype=np.int64)
        if val_x is None:
            logger.warning("No validation segments; early stopping monitors the training loss")

        state = AdamState(learning_rate=cfg.learning_rate)
        stopper = EarlyStopping(cfg.patience)
        history = TrainHistory()
        n = len(train_y)

        epochs = tqdm(range(1, cfg.max_epochs + 1), desc=f"{model.spec.architecture}", disable=not self.progress)
        for epoch in epochs:
            order = np.random.default_rng(cfg.seed + epoch).permutation(n)
            total = 0.0
            for start in range(0, n, cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                total += self.train_step(model, train_x[batch], train_y[batch], state) * len(batch)
            train_loss = total / n

            if epoch % cfg.validation_frequency and epoch != cfg.max_epochs:
                history.record(train_loss, np.nan, np.nan)
                continue

            if val_x is not None:
                val_loss, val_acc = self.evaluate(model, val_x, val_y)
            else:
                val_loss, val_acc = train_loss, np.nan
            history.record(train_loss, val_loss, val_acc)
            logger.debug(f"epoch {epoch}: train_loss={train_loss:.5f} val_loss={val_loss:.5f} val_acc={val_acc:.4f}")

            if stopper.update(epoch, val_loss, model.state_dict):
                history.stopped_early = True
                break

        if stopper.best_state is not None:
            model.load_state_dict(stopper.best_state)
        history.best_epoch = stopper.best_epoch
        logger.info(
            f"Trained {model.spec.architecture}: {len(history)} epochs, best epoch {history.best_epoch} "
            f"(val_loss {stopper.best_loss:.5f}){' - stopped early' if history.stopped_early else ''}"
        )
        return history


# ============================================================================
# CROSS-VALIDATION STUDIES
# ============================================================================

@dataclass
class StudyConfig:
    """
    Resolved settings of a cross-validation study.

    ``filters``/``kernel`` override the preset convolution width and kernel
    size. ``train`` holds TrainConfig overrides (batch_size, learning_rate,
    max_epochs, patience, dtype); unset keys fall back to task defaults.
    """

    task: str
    architectures: List[str] = field(default_factory=lambda: list(ARCHITECTURES))
    folds: Optional[int] = None
    seed: int = RANDOM_SEED
    data_dir: Optional[str] = None
    out_dir: Optional[str] = None
    jobs: int = N_JOBS
    variant: Optional[str] = None
    fft_layout: str = "real_imag"
    filters: Optional[int] = None
    kernel: Optional[int] = None
    train: Dict = field(default_factory=dict)

    def __post_init__(self):
        settings = task_settings(self.task)
        if self.folds is None:
            self.folds = settings["folds"]
        unknown = [arch for arch in self.architectures if arch not in ARCHITECTURES]
        if unknown or not self.architectures:
            raise ConfigurationError(f"Unknown architectures: {', '.join(unknown) or '(none given)'}")
        if self.folds < 2:
            raise ConfigurationError(f"folds must be at least 2 (got {self.folds})")
        if self.jobs < 1:
            raise ConfigurationError(f"jobs must be at least 1 (got {self.jobs})")

    def train_config(self, fold: int) -> TrainConfig:
        return TrainConfig.for_task(self.task, seed=self.seed + fold, **self.train)

    def to_dict(self) -> Dict:
        return asdict(self)

    def study_key(self) -> Dict:
        """Everything that affects results; ``jobs`` and paths do not."""
        data = self.to_dict()
        for key in ("jobs", "data_dir", "out_dir"):
            data.pop(key)
        return data


def _fold_report_path(out_dir: Path, arch: str, fold: int) -> Path:
    return out_dir / "folds" / f"{arch}_fold{fold}.json"


def run_fold(
    config: StudyConfig,
    arch: str,
    fold: int,
    segments: SegmentSet,
    out_dir: Path,
) -> Dict:
    """
    Build, train, predict and score one (architecture, fold) job and write
    its artifacts. The fold report JSON is written last and marks the job
    as complete.

    Returns:
        dict: FoldReport fields
    """
    plan = stratified_kfold(segments.labels, config.folds, config.seed)
    split = make_split(plan, fold)
    train_cfg = config.train_config(fold)

    spec = model_spec(arch, config.task, variant=config.variant, fft_layout=config.fft_layout,
                      filters=config.filters, kernel=config.kernel)
    model = build_model(spec, seed=config.seed + fold)

    trainer = ModelTrainer(train_cfg)
    history = trainer.train(
        model,
        segments.samples[split.train], segments.labels[split.train],
        segments.samples[split.validation], segments.labels[split.validation],
    )

    test_x = model.encode(segments.samples[split.test]).astype(train_cfg.dtype)
    test_y = segments.labels[split.test]
    probabilities = predict_encoded(model, test_x, train_cfg.batch_size)
    auc, acc = score_fold(config.task, probabilities, test_y)
    report = FoldReport(task=config.task, arch=arch, fold=fold, auc=auc, acc=acc, n_test=int(len(test_y)))

    save_dataframe(history.to_frame(), out_dir / "histories" / HISTORY_TEMPLATE.format(arch=arch, fold=fold),
                   columns=HISTORY_COLUMNS)
    buffer = io.BytesIO()
    np.savez(buffer, probabilities=probabilities, labels=test_y, indices=split.test)
    atomic_write_bytes(out_dir / "predictions" / PREDICTIONS_TEMPLATE.format(arch=arch, fold=fold), buffer.getvalue())
    save_model(model, out_dir / "checkpoints" / f"{arch}_fold{fold}{CHECKPOINT_SUFFIX}")
    save_json(report.to_dict(), _fold_report_path(out_dir, arch, fold))

    logger.info(f"✓ {config.task}/{arch} fold {fold}: auc={auc:.4f} acc={acc:.4f} (n_test={len(test_y)})")
    return report.to_dict()


class CrossValidator:
    """
    Runs a stratified k-fold study for several architectures, resuming from
    completed folds recorded in the output directory.

    Attributes:
        config: Study settings
        out_dir: Directory holding the manifest and every artifact
    """

    def __init__(self, config: StudyConfig, out_dir: Path):
        self.config = config
        self.out_dir = Path(out_dir)

    def jobs(self) -> List[Tuple[str, int]]:
        return [(arch, fold) for arch in self.config.architectures for fold in range(self.config.folds)]

    def completed(self) -> Dict[Tuple[str, int], bool]:
        return {job: _fold_report_path(self.out_dir, *job).exists() for job in self.jobs()}

    def load_manifest(self) -> Optional[Dict]:
        path = self.out_dir / MANIFEST_FILE
        return load_json(path) if path.exists() else None

    def write_manifest(self) -> None:
        status = {f"{arch}/{fold}": ("done" if done else "pending") for (arch, fold), done in self.completed().items()}
        save_json({
            "code_version": __version__,
            "config": self.config.to_dict(),
            "seeds": {f"fold{fold}": self.config.seed + fold for fold in range(self.config.folds)},
            "status": status,
        }, self.out_dir / MANIFEST_FILE)

    def check_resume(self) -> None:
        """
        Raises:
            ConfigurationError: The directory holds a study with other settings
        """
        manifest = self.load_manifest()
        if manifest is None:
            return
        previous = StudyConfig(**manifest["config"]).study_key()
        if previous != self.config.study_key():
            raise ConfigurationError(
                f"{self.out_dir} already holds a study with different settings; choose another --out"
            )

    def run(self, segments: SegmentSet) -> StudySummary:
        """
        Train every pending (architecture, fold) job, then write the fold,
        summary and p-value tables and the plots.

        Raises:
            ConfigurationError: Segment task mismatch or conflicting manifest
        """
        cfg = self.config
        if segments.task != cfg.task:
            raise ConfigurationError(f"segments belong to '{segments.task}', study is for '{cfg.task}'")

        logger.info("=" * 60)
        logger.info(f"Cross-validation: {cfg.task}, {cfg.folds} folds, {', '.join(cfg.architectures)}")
        logger.info("=" * 60)

        self.check_resume()
        self.write_manifest()

        pending = [job for job, done in self.completed().items() if not done]
        logger.info(f"\n[1/3] Training {len(pending)} pending job(s) ({len(self.jobs()) - len(pending)} already done)...")
        if pending:
            Parallel(n_jobs=cfg.jobs)(
                delayed(run_fold)(cfg, arch, fold, segments, self.out_dir) for arch, fold in pending
            )
        self.write_manifest()

        logger.info("\n[2/3] Writing tables...")
        summary = StudySummary([FoldReport(**load_json(_fold_report_path(self.out_dir, *job))) for job in self.jobs()])
        self.write_tables(summary)

        logger.info("\n[3/3] Plotting...")
        plot_roc_curves(self.out_dir, cfg.task, cfg.architectures, cfg.folds)
        plot_accuracy_bars(summary.summary_frame(), self.out_dir / f"accuracy_{cfg.task}.svg")

        logger.info("✓ Cross-validation complete")
        return summary

    def write_tables(self, summary: StudySummary) -> None:
        save_dataframe(summary.fold_frame(), self.out_dir / FOLD_REPORTS_FILE, columns=FOLD_REPORT_COLUMNS)
        save_dataframe(summary.summary_frame(), self.out_dir / SUMMARY_FILE, columns=SUMMARY_COLUMNS)
        save_dataframe(summary.pvalue_frame(all_pairs=True), self.out_dir / PVALUES_FILE)


def main():
    """Train one CNN1D on fold 0 of the cached MIT-BIH segments."""
    from src.config import OUTPUT_DIR
    from src.data_ingest import load_segments

    segments = load_segments("mitbih")

    config = StudyConfig(task="mitbih", architectures=["cnn1d"])
    run_fold(config, "cnn1d", 0, segments, OUTPUT_DIR / "mitbih")


if __name__ == "__main__":
    main()
