"""
Data Ingestion Module for the ECG study.

This module handles:
1. Locating the PhysioNet records of a task under the data directory
2. Verifying files against the database's published SHA256SUMS.txt
3. Parsing and segmenting every record (in parallel, deterministic order)
4. Checking segment counts against the study's reported totals
5. Writing the binary segment cache, an ingestion report and a diagnostics
   listing of skipped annotation symbols

Downloading is done separately by fetch_data.py; nothing here touches the
network.

Usage:
    python src/data_ingest.py
"""

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from joblib import Parallel, delayed
from src.config import (
    APNEA_FRACTION_TOLERANCE,
    APNEA_RECORDS,
    APNEA_TARGET_APNEA,
    APNEA_TARGET_TOTAL,
    APNEA_TOLERANCE,
    CACHE_DIR,
    CHECKSUM_FILE,
    DATA_DIR,
    DIAGNOSTICS_TEMPLATE,
    ECGID_PERSONS,
    ECGID_RECORDINGS,
    ECGID_TARGET_TOTAL,
    ECGID_TOLERANCE,
    INGESTION_REPORT_TEMPLATE,
    MITBIH_RECORDS,
    MITBIH_TARGET_COUNTS,
    MITBIH_TARGET_TOTAL,
    N_JOBS,
    SEGMENT_CACHE_TEMPLATE,
    task_settings,
)
from src.dataset import (
    LabeledSegment,
    SegmentSet,
    apnea_label_names,
    mitbih_label_names,
    segment_apnea,
    segment_ecgid,
    segment_mitbih,
)
from src.helpers import (
    DataNotFoundError,
    atomic_write_bytes,
    load_segment_cache,
    read_checksum_list,
    save_json,
    save_segment_cache,
    verify_checksum,
)
from src.logger import get_logger
from src.wfdb import parse_header, read_record

logger = get_logger(__name__)


@dataclass
class RecordEntry:
    """One record to ingest: path without extension and, for ECG-ID, the person label."""

    path: Path
    label: int = -1

    @property
    def name(self) -> str:
        return f"{self.path.parent.name}/{self.path.name}"


@dataclass
class IngestionResult:
    segments: SegmentSet
    report: Dict
    problems: List[str] = field(default_factory=list)

    @property
    def meets_targets(self) -> bool:
        return not self.problems


def _segment_record(task: str, entry: RecordEntry, annotation: Optional[str]) -> Tuple[List[LabeledSegment], Counter]:
    diagnostics: Counter = Counter()
    record = read_record(entry.path, annotation)
    if task == "mitbih":
        segments = segment_mitbih(record, diagnostics)
    elif task == "apnea":
        segments = segment_apnea(record, diagnostics)
    else:
        segments = segment_ecgid(record, entry.label)
        for segment in segments:
            segment.source = (entry.name, segment.source[1])
        if not segments:
            diagnostics["<no cardiac cycle>"] += 1
    return segments, diagnostics


def check_targets(segments: SegmentSet) -> List[str]:
    """
    Compare segment counts with the study's reported totals.

    Returns:
        list: One message per deviation beyond tolerance (empty when met)
    """
    problems = []
    counts = segments.class_counts()
    total = len(segments)

    if segments.task == "mitbih":
        if total != MITBIH_TARGET_TOTAL:
            problems.append(f"MIT-BIH total {total} != {MITBIH_TARGET_TOTAL}")
        for name, target in MITBIH_TARGET_COUNTS.items():
            if counts.get(name, 0) != target:
                problems.append(f"MIT-BIH class {name}: {counts.get(name, 0)} != {target}")

    elif segments.task == "ecgid":
        if abs(total - ECGID_TARGET_TOTAL) > ECGID_TOLERANCE * ECGID_TARGET_TOTAL:
            problems.append(f"ECG-ID total {total} outside {ECGID_TARGET_TOTAL} ± {ECGID_TOLERANCE:.0%}")
        present = sum(1 for count in counts.values() if count > 0)
        if present != ECGID_PERSONS:
            problems.append(f"ECG-ID covers {present} persons, expected {ECGID_PERSONS}")

    elif segments.task == "apnea":
        if abs(total - APNEA_TARGET_TOTAL) > APNEA_TOLERANCE * APNEA_TARGET_TOTAL:
            problems.append(f"Apnea-ECG total {total} outside {APNEA_TARGET_TOTAL} ± {APNEA_TOLERANCE:.0%}")
        target_fraction = APNEA_TARGET_APNEA / APNEA_TARGET_TOTAL
        fraction = counts.get("A", 0) / total if total else 0.0
        if abs(fraction - target_fraction) > APNEA_FRACTION_TOLERANCE:
            problems.append(f"Apnea fraction {fraction:.3f} outside {target_fraction:.3f} ± {APNEA_FRACTION_TOLERANCE}")

    return problems


class DataIngester:
    """
    Turns one PhysioNet database into the segment cache of its task.

    Attributes:
        task: mitbih | ecgid | apnea
        data_dir: Directory holding one subdirectory per database
        out_dir: Where the cache, report and diagnostics go
        n_jobs: Parallel record workers
        verify_checksums: Check files against SHA256SUMS.txt when present
    """

    def __init__(
        self,
        task: str,
        data_dir: Path = DATA_DIR,
        out_dir: Path = CACHE_DIR,
        n_jobs: int = N_JOBS,
        verify_checksums: bool = True,
    ):
        self.task = task
        self.settings = task_settings(task)
        self.data_dir = Path(data_dir)
        self.out_dir = Path(out_dir)
        self.n_jobs = n_jobs
        self.verify_checksums = verify_checksums

    @property
    def database_dir(self) -> Path:
        return self.data_dir / self.settings["database"]

    @property
    def cache_path(self) -> Path:
        return self.out_dir / SEGMENT_CACHE_TEMPLATE.format(task=self.task)

    def label_names(self) -> List[str]:
        if self.task == "mitbih":
            return mitbih_label_names()
        if self.task == "apnea":
            return apnea_label_names()
        return [f"Person_{i:02d}" for i in range(1, ECGID_PERSONS + 1)]

    def locate_records(self) -> List[RecordEntry]:
        """
        Raises:
            DataNotFoundError: Expected records (or ECG-ID persons) are missing
        """
        root = self.database_dir
        annotation = self.settings["annotation"]

        if self.task in ("mitbih", "apnea"):
            names = MITBIH_RECORDS if self.task == "mitbih" else APNEA_RECORDS
            missing = [name for name in names
                       if not (root / f"{name}.hea").exists() or not (root / f"{name}.{annotation}").exists()]
            if missing:
                raise DataNotFoundError(root, missing)
            return [RecordEntry(root / name) for name in names]

        persons = self.label_names()
        missing = [person for person in persons if not sorted((root / person).glob("rec_*.hea"))]
        if missing:
            raise DataNotFoundError(root, missing)

        entries = []
        for label, person in enumerate(persons):
            headers = sorted((root / person).glob("rec_*.hea"), key=lambda p: int(p.stem.split("_")[1]))
            entries.extend(RecordEntry(h.with_suffix(""), label) for h in headers)
        if len(entries) != ECGID_RECORDINGS:
            logger.warning(f"Found {len(entries)} ECG-ID recordings, expected {ECGID_RECORDINGS}")
        return entries

    def record_files(self, entry: RecordEntry) -> List[Path]:
        header_path = entry.path.with_suffix(".hea")
        files = [header_path]
        header = parse_header(header_path.read_bytes())
        files.extend(entry.path.parent / name for name in dict.fromkeys(s.filename for s in header.signals))
        if self.settings["annotation"]:
            files.append(entry.path.with_suffix(f".{self.settings['annotation']}"))
        return files

    def verify(self, entries: List[RecordEntry]) -> int:
        """
        Check every file of every record against the published checksums.

        Returns:
            int: Number of files verified (0 when no checksum list exists)

        Raises:
            ChecksumMismatchError: On the first mismatching file
        """
        listing = self.database_dir / CHECKSUM_FILE
        if not listing.exists():
            logger.warning(f"{listing} not found; record files are not checksum-verified")
            return 0

        sums = read_checksum_list(listing)
        verified = 0
        for entry in entries:
            for path in self.record_files(entry):
                relative = path.relative_to(self.database_dir).as_posix()
                if relative not in sums:
                    logger.warning(f"No published checksum for {relative}")
                    continue
                verify_checksum(path, sums[relative])
                verified += 1
        logger.info(f"✓ Verified {verified} files against {CHECKSUM_FILE}")
        return verified

    def segment(self, entries: List[RecordEntry]) -> Tuple[SegmentSet, Dict[str, int], Counter]:
        """Segment all records; results keep the record order."""
        annotation = self.settings["annotation"]
        results = Parallel(n_jobs=self.n_jobs)(
            delayed(_segment_record)(self.task, entry, annotation) for entry in entries
        )

        segments: List[LabeledSegment] = []
        per_record: Dict[str, int] = {}
        diagnostics: Counter = Counter()
        for entry, (record_segments, record_diagnostics) in zip(entries, results):
            segments.extend(record_segments)
            per_record[entry.name if self.task == "ecgid" else entry.path.name] = len(record_segments)
            diagnostics.update(record_diagnostics)

        return SegmentSet.from_segments(self.task, segments, self.label_names()), per_record, diagnostics

    def write_diagnostics(self, diagnostics: Counter) -> Path:
        path = self.out_dir / DIAGNOSTICS_TEMPLATE.format(task=self.task)
        lines = [f"# skipped annotations and discarded windows, task {self.task}", "symbol\tcount"]
        lines += [f"{symbol}\t{count}" for symbol, count in sorted(diagnostics.items())]
        atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))
        return path

    def run(self) -> IngestionResult:
        """
        Execute the complete ingestion pipeline.

        Returns:
            IngestionResult: Segments, report and target deviations

        Raises:
            DataNotFoundError: Records missing
            ChecksumMismatchError: Corrupt download
        """
        logger.info("=" * 60)
        logger.info(f"Starting Data Ingestion: {self.task} ({self.settings['database']})")
        logger.info("=" * 60)

        logger.info("\n[1/4] Locating records...")
        entries = self.locate_records()
        logger.info(f"Found {len(entries)} records under {self.database_dir}")

        logger.info("\n[2/4] Verifying checksums...")
        if self.verify_checksums:
            self.verify(entries)
        else:
            logger.info("Checksum verification disabled")

        logger.info("\n[3/4] Segmenting records...")
        segments, per_record, diagnostics = self.segment(entries)
        problems = check_targets(segments)

        logger.info("\n[4/4] Writing cache and report...")
        save_segment_cache(self.cache_path, self.task, segments.samples, segments.labels,
                           segments.sources, segments.label_names)
        report = {
            "task": self.task,
            "database": self.settings["database"],
            "records": len(entries),
            "total": len(segments),
            "class_counts": segments.class_counts(),
            "per_record": per_record,
            "diagnostics": dict(sorted(diagnostics.items())),
            "target_deviations": problems,
        }
        save_json(report, self.out_dir / INGESTION_REPORT_TEMPLATE.format(task=self.task))
        self.write_diagnostics(diagnostics)

        logger.info("=" * 60)
        logger.info(f"Data Ingestion Complete: {len(segments)} segments")
        for name, count in report["class_counts"].items():
            if count:
                logger.debug(f"  {name}: {count}")
        if problems:
            for problem in problems:
                logger.warning(f"Target deviation: {problem}")
        else:
            logger.info("✓ Segment counts meet the study's targets")
        logger.info(f"Saved to: {self.cache_path}")
        logger.info("=" * 60)

        return IngestionResult(segments=segments, report=report, problems=problems)


def load_segments(task: str, cache_dir: Path = CACHE_DIR) -> SegmentSet:
    """
    Load a task's segment cache as a SegmentSet.

    Raises:
        ValueError: Cache missing or for another task
    """
    header, samples, labels = load_segment_cache(Path(cache_dir) / SEGMENT_CACHE_TEMPLATE.format(task=task))
    if header["task"] != task:
        raise ValueError(f"cache holds '{header['task']}' segments, expected '{task}'")
    sources = [(record, int(position)) for record, position in header["sources"]]
    return SegmentSet(task, samples, labels, sources, header["labels"])


def main():
    """Main entry point for data ingestion."""
    for task in ("mitbih", "ecgid", "apnea"):
        result = DataIngester(task).run()

        print("\n" + "=" * 60)
        print(f"Dataset Summary - {task}")
        print("=" * 60)
        print(f"Segments: {result.report['total']}")
        for name, count in result.report["class_counts"].items():
            if count:
                print(f"  {name}: {count}")


if __name__ == "__main__":
    main()
