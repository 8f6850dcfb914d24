"""
PhysioNet downloader.

Fetches the files a task needs from the public PhysioNet mirror into
``ECG_DATA_DIR/<database>/``, verifying each against the database's
published SHA256SUMS.txt. Files already present with a matching checksum
are skipped. The study CLI never downloads on its own.

Usage:
    python fetch_data.py --task mitbih
    python fetch_data.py --task all
"""

import argparse
import sys
from pathlib import Path
from typing import Dict, List

import requests
from tqdm import tqdm

sys.path.insert(0, str(Path(__file__).parent))

from src.config import APNEA_RECORDS, CHECKSUM_FILE, DATA_DIR, MITBIH_RECORDS, PHYSIONET_BASE_URL, TASK_NAMES, TASKS
from src.helpers import ChecksumMismatchError, read_checksum_list, sha256_file, verify_checksum
from src.logger import get_logger

logger = get_logger(__name__)


def database_url(task: str) -> str:
    settings = TASKS[task]
    return f"{PHYSIONET_BASE_URL}/{settings['database']}/{settings['version']}"


def download_file(url: str, destination: Path) -> None:
    """
    Download file from URL to destination with progress bar.

    Args:
        url: Source URL
        destination: Destination file path
    """
    destination.parent.mkdir(parents=True, exist_ok=True)
    partial = destination.with_name(destination.name + ".part")
    try:
        response = requests.get(url, stream=True, timeout=60)
        response.raise_for_status()

        total_size = int(response.headers.get("content-length", 0))
        with open(partial, "wb") as f, tqdm(
            desc=destination.name,
            total=total_size,
            unit="iB",
            unit_scale=True,
            unit_divisor=1024,
            leave=False,
        ) as pbar:
            for chunk in response.iter_content(chunk_size=8192):
                pbar.update(f.write(chunk))
        partial.replace(destination)

    except requests.exceptions.RequestException as e:
        logger.error(f"Failed to download {url}: {e}")
        if partial.exists():
            partial.unlink()
        raise


def wanted_files(task: str, checksums: Dict[str, str]) -> List[str]:
    """Relative paths of the files one task reads."""
    annotation = TASKS[task]["annotation"]
    if task in ("mitbih", "apnea"):
        names = MITBIH_RECORDS if task == "mitbih" else APNEA_RECORDS
        return [f"{name}.{ext}" for name in names for ext in ("hea", "dat", annotation)]
    return sorted(path for path in checksums
                  if path.startswith("Person_") and path.rsplit(".", 1)[-1] in ("hea", "dat"))


def fetch_task(task: str, data_dir: Path = DATA_DIR) -> int:
    """
    Download and verify every file of one task.

    Returns:
        int: Number of files downloaded (verified existing files excluded)

    Raises:
        ChecksumMismatchError: A downloaded file does not match
        KeyError: A needed file is not listed in SHA256SUMS.txt
    """
    base_url = database_url(task)
    target_dir = data_dir / TASKS[task]["database"]

    logger.info("=" * 60)
    logger.info(f"Fetching {task} from {base_url}")
    logger.info("=" * 60)

    listing = target_dir / CHECKSUM_FILE
    download_file(f"{base_url}/{CHECKSUM_FILE}", listing)
    checksums = read_checksum_list(listing)

    downloaded = 0
    for relative in tqdm(wanted_files(task, checksums), desc=task, unit="file"):
        expected = checksums[relative]
        destination = target_dir / relative
        if destination.exists() and sha256_file(destination) == expected:
            continue
        download_file(f"{base_url}/{relative}", destination)
        verify_checksum(destination, expected)
        downloaded += 1

    logger.info(f"✓ {task}: {downloaded} files downloaded into {target_dir}")
    return downloaded


def main() -> int:
    parser = argparse.ArgumentParser(description="Download PhysioNet databases used by the study.")
    parser.add_argument("--task", choices=TASK_NAMES + ["all"], default="all")
    parser.add_argument("--data-dir", default=str(DATA_DIR))
    args = parser.parse_args()

    tasks = TASK_NAMES if args.task == "all" else [args.task]
    try:
        for task in tasks:
            fetch_task(task, Path(args.data_dir))
    except (requests.exceptions.RequestException, ChecksumMismatchError, KeyError) as exc:
        logger.error(f"Download failed: {exc}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
