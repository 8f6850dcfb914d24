"""
Configuration module for the ECG time/frequency classification study.

This module contains all project-wide constants, paths, and configuration settings.
Loads environment variables and provides centralized access to settings.
"""

import os
from pathlib import Path
from typing import Dict, List
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# ============================================================================
# PROJECT PATHS
# ============================================================================

# Base directory (project root)
BASE_DIR = Path(__file__).resolve().parent.parent

# PhysioNet databases live below DATA_DIR, one subdirectory per database
DATA_DIR = Path(os.getenv("ECG_DATA_DIR", str(BASE_DIR / "data_raw")))

# Segment caches, studies and logs
CACHE_DIR = Path(os.getenv("ECG_CACHE_DIR", str(BASE_DIR / "data_processed")))
OUTPUT_DIR = Path(os.getenv("ECG_OUTPUT_DIR", str(BASE_DIR / "reports")))
LOG_DIR = BASE_DIR / "logs"

# ============================================================================
# PHYSIONET SOURCES
# ============================================================================

PHYSIONET_BASE_URL = os.getenv("PHYSIONET_BASE_URL", "https://physionet.org/files")

# Published checksum list shipped by PhysioNet next to every database
CHECKSUM_FILE = "SHA256SUMS.txt"

MITBIH_RECORDS: List[str] = [
    "100", "101", "102", "103", "104", "105", "106", "107", "108", "109",
    "111", "112", "113", "114", "115", "116", "117", "118", "119",
    "121", "122", "123", "124",
    "200", "201", "202", "203", "205", "207", "208", "209", "210",
    "212", "213", "214", "215", "217", "219", "220", "221", "222", "223",
    "228", "230", "231", "232", "233", "234",
]

# Apnea-ECG training group (released / learning set)
APNEA_RECORDS: List[str] = (
    [f"a{i:02d}" for i in range(1, 21)]
    + [f"b{i:02d}" for i in range(1, 6)]
    + [f"c{i:02d}" for i in range(1, 11)]
)

ECGID_PERSONS = 90
ECGID_RECORDINGS = 310

# ============================================================================
# TASKS
# ============================================================================

TASK_NAMES: List[str] = ["mitbih", "ecgid", "apnea"]

TASKS: Dict[str, Dict] = {
    "mitbih": {
        "database": "mitdb",
        "version": "1.0.0",
        "annotation": "atr",
        "sampling_frequency": 360,
        "segment_length": 257,
        "n_classes": 5,
        "folds": 10,
        "batch_size": 995,
    },
    "ecgid": {
        "database": "ecgiddb",
        "version": "1.0.0",
        "annotation": None,
        "sampling_frequency": 500,
        "segment_length": 250,
        "n_classes": 90,
        "folds": 4,
        "batch_size": 921,
    },
    "apnea": {
        "database": "apnea-ecg",
        "version": "1.0.0",
        "annotation": "apn",
        "sampling_frequency": 100,
        "segment_length": 6000,
        "n_classes": 2,
        "folds": 10,
        "batch_size": 797,
    },
}

# MIT-BIH beat window: R-peak centered, 128 samples either side
MITBIH_HALF_WINDOW = 128

# ECG-ID cycle window and number of representative cycles per recording
ECGID_BEFORE_PEAK = 80
ECGID_AFTER_PEAK = 170
ECGID_CYCLES_PER_RECORDING = 8

# Apnea-ECG minute segmentation
APNEA_MINUTE_SAMPLES = 6000
APNEA_MAX_LOSS_RUN = 50  # samples (0.5 s at 100 Hz); longer runs discard the minute
APNEA_LABELS: Dict[str, int] = {"N": 0, "A": 1}

# Savitzky-Golay smoothing used on Apnea-ECG minutes
SAVGOL_WINDOW = 5
SAVGOL_ORDER = 3

# Spectrogram settings
STFT_WINDOW = 64
STFT_OVERLAP = 48
SPECTROGRAM_SIZE = 64

# Pan-Tompkins settings
PT_BAND_HZ = (5.0, 15.0)
PT_INTEGRATION_S = 0.150
PT_REFRACTORY_S = 0.200
PT_REFINE_S = 0.050
PT_LEARNING_S = 2.0

# ============================================================================
# BEAT CLASSES
# ============================================================================

AAMI_CLASS_NAMES: List[str] = ["N", "S", "V", "F", "Q"]

AAMI_BEAT_GROUPS: Dict[str, List[str]] = {
    "N": ["N", "L", "R", "e", "j"],
    "S": ["A", "a", "J", "S"],
    "V": ["V", "E"],
    "F": ["F"],
    "Q": ["/", "f", "Q"],
}

# ============================================================================
# MODEL CONFIGURATION
# ============================================================================

# Random seed for reproducibility
RANDOM_SEED = int(os.getenv("RANDOM_SEED", "42"))

ARCHITECTURES: List[str] = ["cnn1d", "fft1d", "fan", "cfan"]

# Training parameters shared by every task
LEARNING_RATE = float(os.getenv("LEARNING_RATE", "0.001"))
MAX_EPOCHS = int(os.getenv("MAX_EPOCHS", "300"))
VALIDATION_PATIENCE = int(os.getenv("VALIDATION_PATIENCE", "30"))
VALIDATION_FREQUENCY = 1  # epochs

# Adam
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-7

# Floating point type used while training ("float64" or "float32")
TRAIN_DTYPE = os.getenv("TRAIN_DTYPE", "float32")

# Probability floor inside the cross-entropy loss
PROBABILITY_FLOOR = 1e-12

# Default parallel fold trainings
N_JOBS = int(os.getenv("N_JOBS", "1"))

# ============================================================================
# ACCEPTANCE TARGETS
# ============================================================================

MITBIH_TARGET_COUNTS: Dict[str, int] = {"N": 90593, "S": 2781, "V": 7235, "F": 802, "Q": 8040}
MITBIH_TARGET_TOTAL = 109451

ECGID_TARGET_TOTAL = 2456
ECGID_TOLERANCE = 0.01

APNEA_TARGET_TOTAL = 15880
APNEA_TARGET_APNEA = 5925
APNEA_TOLERANCE = 0.02
APNEA_FRACTION_TOLERANCE = 0.02  # absolute, i.e. 2 percentage points

# ============================================================================
# LOGGING CONFIGURATION
# ============================================================================

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# ============================================================================
# FILE FORMATS
# ============================================================================

SEGMENT_CACHE_TEMPLATE = "segments_{task}.bin"
INGESTION_REPORT_TEMPLATE = "ingestion_{task}.json"
DIAGNOSTICS_TEMPLATE = "diagnostics_{task}.txt"
CHECKPOINT_SUFFIX = ".ckpt"
MANIFEST_FILE = "manifest.json"
FOLD_REPORTS_FILE = "fold_reports.csv"
SUMMARY_FILE = "summary.csv"
PVALUES_FILE = "pvalues.csv"
HISTORY_TEMPLATE = "history_{arch}_fold{fold}.csv"
PREDICTIONS_TEMPLATE = "predictions_{arch}_fold{fold}.npz"

# Column order of every CSV the study writes
FOLD_REPORT_COLUMNS: List[str] = ["task", "arch", "fold", "auc", "acc", "n_test"]
SUMMARY_COLUMNS: List[str] = ["task", "arch", "auc_mean", "auc_std", "acc_mean", "acc_std"]
HISTORY_COLUMNS: List[str] = ["epoch", "train_loss", "val_loss", "val_acc"]


# ============================================================================
# VALIDATION
# ============================================================================

def task_settings(task: str) -> Dict:
    """
    Look up the constants of one task.

    Args:
        task: One of TASK_NAMES

    Returns:
        dict: Task settings

    Raises:
        KeyError: If the task is unknown
    """
    if task not in TASKS:
        raise KeyError(f"Unknown task '{task}'. Expected one of: {', '.join(TASK_NAMES)}")
    return TASKS[task]


def validate_config() -> bool:
    """
    Validate that all required configuration is properly set.

    Returns:
        bool: True if configuration is valid, False otherwise
    """
    issues = []

    if not DATA_DIR.exists():
        issues.append(f"Data directory does not exist: {DATA_DIR}")

    for name, value in [("LEARNING_RATE", LEARNING_RATE), ("MAX_EPOCHS", MAX_EPOCHS),
                        ("VALIDATION_PATIENCE", VALIDATION_PATIENCE)]:
        if value <= 0:
            issues.append(f"{name} must be positive (got {value})")

    if VALIDATION_PATIENCE > MAX_EPOCHS:
        issues.append("VALIDATION_PATIENCE must not exceed MAX_EPOCHS")

    if TRAIN_DTYPE not in ("float32", "float64"):
        issues.append(f"TRAIN_DTYPE must be float32 or float64 (got {TRAIN_DTYPE})")

    if issues:
        print("Configuration validation failed:")
        for issue in issues:
            print(f"  - {issue}")
        return False

    return True


if __name__ == "__main__":
    """Run configuration validation when executed directly."""
    print("ECG Time/Frequency Study - Configuration")
    print("=" * 60)
    print(f"Base Directory: {BASE_DIR}")
    print(f"Data Directory: {DATA_DIR}")
    print(f"Random Seed: {RANDOM_SEED}")
    print(f"Tasks: {', '.join(TASK_NAMES)}")
    print(f"Architectures: {', '.join(ARCHITECTURES)}")
    print("=" * 60)

    if validate_config():
        print("✓ Configuration is valid")
    else:
        print("✗ Configuration validation failed")
