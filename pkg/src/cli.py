"""
Command-line interface for the ECG study.

Subcommands:
    prepare   parse and segment a PhysioNet database into a segment cache
    train     train one architecture on one fold
    crossval  run a k-fold study over several architectures
    report    render consolidated tables (and optional figures)

Usage:
    python -m src.cli prepare --task mitbih
    python -m src.cli crossval --task ecgid --arch cnn1d --arch cfan --jobs 4
    python -m src.cli report --out reports
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional

from src.config import ARCHITECTURES, CACHE_DIR, DATA_DIR, N_JOBS, OUTPUT_DIR, RANDOM_SEED, TASK_NAMES
from src.data_ingest import DataIngester, load_segments
from src.helpers import ConfigurationError, EcgStudyError
from src.logger import add_file_handler, get_logger
from src.modeling import CrossValidator, StudyConfig, run_fold
from src.models import VARIANTS
from src.reporting import plot_task_figures, write_report

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_TARGETS_MISSED = 2

STUDY_KEYS = {"task", "architectures", "folds", "seed", "data_dir", "out_dir", "jobs", "variant", "fft_layout",
              "filters", "kernel", "train"}
TRAIN_KEYS = {"batch_size", "learning_rate", "max_epochs", "patience", "dtype"}
STUDY_LOGGERS = ("src.cli", "src.modeling", "src.models", "src.evaluation", "src.reporting")


# ============================================================================
# STUDY CONFIGURATION
# ============================================================================

def load_config_file(path: Optional[str]) -> Dict:
    """
    Read a JSON study config.

    Raises:
        ConfigurationError: Unreadable file or unknown keys
    """
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"Cannot read config file {path}: {exc}") from exc

    unknown = set(data) - STUDY_KEYS
    unknown |= {f"train.{key}" for key in set(data.get("train", {})) - TRAIN_KEYS}
    if unknown:
        raise ConfigurationError(f"Unknown config keys in {path}: {', '.join(sorted(unknown))}")
    return data


def resolve_study_config(args: argparse.Namespace) -> StudyConfig:
    """Merge the config file with command-line flags; flags win."""
    data = load_config_file(args.config)
    train = dict(data.get("train", {}))

    flags = {
        "task": args.task,
        "architectures": args.arch,
        "folds": args.folds,
        "seed": args.seed,
        "data_dir": args.data_dir,
        "out_dir": args.out,
        "jobs": args.jobs,
        "variant": args.variant,
        "fft_layout": args.fft_layout,
        "filters": args.filters,
        "kernel": args.kernel,
    }
    data.update({key: value for key, value in flags.items() if value is not None})

    train_flags = {
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "max_epochs": args.epochs,
        "patience": args.patience,
        "dtype": args.dtype,
    }
    train.update({key: value for key, value in train_flags.items() if value is not None})
    data["train"] = train

    if "task" not in data:
        raise ConfigurationError("--task is required (or 'task' in the config file)")
    data.setdefault("data_dir", str(CACHE_DIR))
    data.setdefault("out_dir", str(OUTPUT_DIR / data["task"]))
    if data.get("variant") and data.get("architectures") is None:
        data["architectures"] = ["cnn1d"]
    return StudyConfig(**data)


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_prepare(args: argparse.Namespace) -> int:
    out_dir = Path(args.out or CACHE_DIR)
    ingester = DataIngester(
        args.task,
        data_dir=Path(args.data_dir or DATA_DIR),
        out_dir=out_dir,
        n_jobs=args.jobs or N_JOBS,
        verify_checksums=not args.no_verify,
    )
    result = ingester.run()

    print(f"\n{args.task}: {result.report['total']} segments")
    for name, count in result.report["class_counts"].items():
        if count and args.task != "ecgid":
            print(f"  {name:>4}: {count}")

    if not result.meets_targets:
        for problem in result.problems:
            print(f"✗ {problem}")
        return EXIT_TARGETS_MISSED
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = resolve_study_config(args)
    if len(config.architectures) != 1:
        raise ConfigurationError("train takes exactly one --arch")
    if not 0 <= args.fold < config.folds:
        raise ConfigurationError(f"--fold must lie in 0..{config.folds - 1}")

    segments = load_segments(config.task, Path(config.data_dir))
    out_dir = Path(config.out_dir)
    report = run_fold(config, config.architectures[0], args.fold, segments, out_dir)
    print(f"\n{config.task}/{report['arch']} fold {report['fold']}: auc={report['auc']:.4f} acc={report['acc']:.4f}")
    return EXIT_OK


def cmd_crossval(args: argparse.Namespace) -> int:
    config = resolve_study_config(args)
    out_dir = Path(config.out_dir)
    for name in STUDY_LOGGERS:
        add_file_handler(get_logger(name), out_dir / "study.log")

    segments = load_segments(config.task, Path(config.data_dir))
    summary = CrossValidator(config, out_dir).run(segments)
    print()
    print(summary.summary_frame().to_string(index=False))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    root = Path(args.out or OUTPUT_DIR)
    write_report(root)

    if args.figures:
        cache_dir = Path(args.data_dir or CACHE_DIR)
        for task in TASK_NAMES:
            try:
                segments = load_segments(task, cache_dir)
            except ValueError:
                logger.info(f"No segment cache for {task}; figures skipped")
                continue
            plot_task_figures(segments, root / "figures")
    return EXIT_OK


# ============================================================================
# PARSER
# ============================================================================

def _study_arguments(parser: argparse.ArgumentParser, train_only: bool = False) -> None:
    g = parser.add_argument_group("study")
    g.add_argument("--config", default=None, help="JSON study config; flags override its values")
    g.add_argument("--task", choices=TASK_NAMES, default=None)
    g.add_argument("--arch", action="append", choices=ARCHITECTURES, default=None,
                   help="architecture (repeatable); default all four" + ("" if not train_only else ", exactly one"))
    g.add_argument("--folds", type=int, default=None, help="fold count (task default: 10, ecgid 4)")
    g.add_argument("--seed", type=int, default=None, help=f"base seed (default {RANDOM_SEED})")
    g.add_argument("--variant", choices=VARIANTS, default=None, help="CNN1D ablation variant")
    g.add_argument("--fft-layout", choices=["real_imag", "mag_phase"], default=None)
    g.add_argument("--filters", type=int, default=None, help="convolution width (preset: 96, apnea 12)")
    g.add_argument("--kernel", type=int, default=None, help="convolution kernel size (preset: 64)")
    g.add_argument("--data-dir", default=None, help="directory holding segments_<task>.bin")
    g.add_argument("--out", default=None, help="study output directory")
    g.add_argument("--jobs", type=int, default=None, help="concurrent fold trainings")

    g = parser.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=None)
    g.add_argument("--patience", type=int, default=None)
    g.add_argument("--batch-size", type=int, default=None)
    g.add_argument("--lr", type=float, default=None)
    g.add_argument("--dtype", choices=["float32", "float64"], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecg-study",
        description="Time/frequency ECG classification study: CNN1D, FFT1D, FAN and CFAN.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("prepare", help="segment a PhysioNet database")
    p.add_argument("--task", choices=TASK_NAMES, required=True)
    p.add_argument("--data-dir", default=None, help=f"PhysioNet databases (default {DATA_DIR})")
    p.add_argument("--out", default=None, help=f"cache directory (default {CACHE_DIR})")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--no-verify", action="store_true", help="skip SHA-256 verification")
    p.set_defaults(handler=cmd_prepare)

    p = subparsers.add_parser("train", help="train one architecture on one fold")
    _study_arguments(p, train_only=True)
    p.add_argument("--fold", type=int, default=0)
    p.set_defaults(handler=cmd_train)

    p = subparsers.add_parser("crossval", help="run a cross-validation study")
    _study_arguments(p)
    p.set_defaults(handler=cmd_crossval)

    p = subparsers.add_parser("report", help="render consolidated tables")
    p.add_argument("--out", default=None, help=f"directory searched for studies (default {OUTPUT_DIR})")
    p.add_argument("--figures", action="store_true", help="also plot example segments, FFTs and spectrograms")
    p.add_argument("--data-dir", default=None, help=f"segment caches for --figures (default {CACHE_DIR})")
    p.set_defaults(handler=cmd_report)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (EcgStudyError, ValueError, FileNotFoundError) as exc:
        logger.error(str(exc))
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
