"""
Helper utilities module.

Contains shared utility functions used across multiple modules in the project:
the exception hierarchy, atomic file writes, the binary segment cache, the
parameter checkpoint archive, CSV/JSON helpers and checksum verification.
"""

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from src.logger import get_logger

logger = get_logger(__name__)


# ============================================================================
# EXCEPTIONS
# ============================================================================

class EcgStudyError(Exception):
    """Base class of every error raised by this project."""


class WfdbParseError(EcgStudyError, ValueError):
    """Malformed WFDB header, signal or annotation content."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TruncatedSignalError(WfdbParseError):
    """Signal file shorter than its header declares."""

    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(f"truncated signal file: expected {expected} bytes, got {actual}")


class ConfigurationError(EcgStudyError, ValueError):
    """Invalid hyperparameters, layer widths or study settings."""


class ShapeError(EcgStudyError, ValueError):
    """Tensor shapes that do not agree."""


class DataNotFoundError(EcgStudyError, FileNotFoundError):
    """Expected PhysioNet records are missing from the data directory."""

    def __init__(self, directory: Path, missing: List[str]):
        self.directory = directory
        self.missing = list(missing)
        preview = ", ".join(self.missing[:20])
        if len(self.missing) > 20:
            preview += f", ... ({len(self.missing)} total)"
        super().__init__(f"Missing records under {directory}: {preview}")


class ChecksumMismatchError(EcgStudyError, ValueError):
    """A downloaded file does not match its published SHA-256."""

    def __init__(self, path: Path, expected: str, actual: str):
        self.path = path
        super().__init__(f"Checksum mismatch for {path}: expected {expected}, got {actual}")


# ============================================================================
# FILE I/O UTILITIES
# ============================================================================

def atomic_write_bytes(file_path: Path, payload: bytes) -> None:
    """
    Write bytes to a temporary sibling file and move it into place.

    Args:
        file_path: Destination file path
        payload: Content to write
    """
    file_path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=file_path.parent, prefix=f".{file_path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, file_path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def save_json(data: Dict, file_path: Path) -> None:
    """Write a JSON document atomically with sorted keys."""
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    atomic_write_bytes(file_path, text.encode("utf-8"))


def load_json(file_path: Path) -> Dict:
    """
    Load a JSON document.

    Raises:
        ValueError: If the file doesn't exist
    """
    if not file_path.exists():
        raise ValueError(f"File not found: {file_path}")
    with open(file_path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def save_dataframe(
    df: pd.DataFrame,
    file_path: Path,
    columns: Optional[List[str]] = None,
    float_format: str = "%.6f"
) -> None:
    """
    Save DataFrame to CSV with a fixed column order and float formatting,
    so reruns produce byte-identical files.

    Args:
        df: DataFrame to save
        file_path: Destination file path
        columns: Column order (defaults to the frame's own order)
        float_format: printf-style format for float columns

    Raises:
        ValueError: If a requested column is missing
    """
    if columns is not None:
        validate_dataframe_schema(df, columns)
        df = df[columns]

    text = df.to_csv(index=False, float_format=float_format, lineterminator="\n")
    atomic_write_bytes(file_path, text.encode("utf-8"))

    logger.info(f"Saved DataFrame to {file_path} ({len(df)} rows)")


def load_dataframe(file_path: Path) -> pd.DataFrame:
    """
    Load a CSV DataFrame from disk.

    Args:
        file_path: Source file path

    Returns:
        pd.DataFrame: Loaded DataFrame

    Raises:
        ValueError: If the file doesn't exist
    """
    if not file_path.exists():
        raise ValueError(f"File not found: {file_path}")

    df = pd.read_csv(file_path)
    logger.debug(f"Loaded DataFrame from {file_path} ({len(df)} rows)")
    return df


def validate_dataframe_schema(
    df: pd.DataFrame,
    required_columns: List[str],
    raise_error: bool = True
) -> bool:
    """
    Validate that DataFrame contains all required columns.

    Args:
        df: DataFrame to validate
        required_columns: List of required column names
        raise_error: If True, raise ValueError on validation failure

    Returns:
        bool: True if valid, False otherwise

    Raises:
        ValueError: If validation fails and raise_error is True
    """
    missing_cols = [col for col in required_columns if col not in df.columns]

    if missing_cols:
        error_msg = f"Missing required columns: {', '.join(missing_cols)}"
        if raise_error:
            raise ValueError(error_msg)
        logger.error(error_msg)
        return False

    return True


# ============================================================================
# CHECKSUMS
# ============================================================================

def sha256_file(file_path: Path, chunk_size: int = 1 << 20) -> str:
    """Hex SHA-256 digest of a file."""
    digest = hashlib.sha256()
    with open(file_path, "rb") as handle:
        for chunk in iter(lambda: handle.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


def read_checksum_list(file_path: Path) -> Dict[str, str]:
    """
    Parse a ``sha256sum``-style listing (``<digest>  <relative path>``).

    Returns:
        dict: Relative path -> lowercase hex digest
    """
    sums = {}
    with open(file_path, "r", encoding="utf-8") as handle:
        for raw in handle:
            parts = raw.strip().split(maxsplit=1)
            if len(parts) != 2:
                continue
            digest, name = parts
            sums[name.lstrip("*").strip()] = digest.lower()
    return sums


def verify_checksum(file_path: Path, expected: str) -> None:
    """
    Raises:
        ChecksumMismatchError: If the digest differs
    """
    actual = sha256_file(file_path)
    if actual != expected.lower():
        raise ChecksumMismatchError(file_path, expected, actual)


# ============================================================================
# SEGMENT CACHE
# ============================================================================

SEGMENT_MAGIC = b"ECGSEG01"


def save_segment_cache(
    file_path: Path,
    task: str,
    samples: np.ndarray,
    labels: np.ndarray,
    sources: List[Tuple[str, int]],
    label_names: List[str]
) -> None:
    """
    Write segments in the binary cache layout.

    Layout: magic ``ECGSEG01``, little-endian uint32 header length, UTF-8 JSON
    header (task, shape, label table, source table), float32 samples
    (n x channels x length), int32 labels.

    Args:
        file_path: Destination cache file
        task: Task name
        samples: Array of shape (n, channels, length)
        labels: Integer labels of shape (n,)
        sources: (record id, position) per segment
        label_names: Class names indexed by label
    """
    samples = np.asarray(samples)
    labels = np.asarray(labels)
    if samples.ndim != 3:
        raise ShapeError(f"segment array must be 3-D, got shape {samples.shape}")
    if labels.shape != (samples.shape[0],) or len(sources) != samples.shape[0]:
        raise ShapeError("labels, sources and samples disagree on the segment count")

    header = {
        "task": task,
        "shape": list(samples.shape),
        "labels": list(label_names),
        "sources": [[str(record), int(position)] for record, position in sources],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    payload = b"".join([
        SEGMENT_MAGIC,
        struct.pack("<I", len(header_bytes)),
        header_bytes,
        samples.astype("<f4").tobytes(order="C"),
        labels.astype("<i4").tobytes(order="C"),
    ])
    atomic_write_bytes(file_path, payload)
    logger.info(f"Saved segment cache to {file_path} ({samples.shape[0]} segments)")


def load_segment_cache(file_path: Path) -> Tuple[Dict, np.ndarray, np.ndarray]:
    """
    Read a segment cache written by save_segment_cache.

    Returns:
        tuple: (header dict, float32 samples (n, channels, length), int64 labels)

    Raises:
        ValueError: If the file is missing or is not a segment cache
    """
    if not file_path.exists():
        raise ValueError(f"Segment cache not found: {file_path}. Run the prepare command first.")

    blob = file_path.read_bytes()
    if blob[:8] != SEGMENT_MAGIC:
        raise ValueError(f"{file_path} is not a segment cache")

    (header_len,) = struct.unpack_from("<I", blob, 8)
    offset = 12 + header_len
    header = json.loads(blob[12:offset].decode("utf-8"))

    n, channels, length = header["shape"]
    n_values = n * channels * length
    samples = np.frombuffer(blob, dtype="<f4", count=n_values, offset=offset)
    offset += 4 * n_values
    labels = np.frombuffer(blob, dtype="<i4", count=n, offset=offset)

    logger.info(f"Loaded segment cache from {file_path} ({n} segments)")
    return header, samples.reshape(n, channels, length).astype(np.float32), labels.astype(np.int64)


# ============================================================================
# PARAMETER CHECKPOINTS
# ============================================================================

CHECKPOINT_MAGIC = b"ECGCKPT1"
CHECKPOINT_VERSION = 1


def save_checkpoint(params: Dict[str, np.ndarray], file_path: Path, spec: Optional[Dict] = None) -> None:
    """
    Save named parameter arrays as a versioned little-endian float64 archive.

    The model description, when given, goes to a JSON sidecar
    (``<file>.json``) so a checkpoint can be rebuilt without code changes.

    Args:
        params: Parameter name -> array
        file_path: Destination ``.ckpt`` path
        spec: Optional JSON-serializable model description
    """
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(params))]
    for name, array in params.items():
        array = np.asarray(array, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(array.tobytes(order="C"))

    atomic_write_bytes(file_path, b"".join(chunks))
    if spec is not None:
        save_json(spec, file_path.with_suffix(file_path.suffix + ".json"))

    logger.info(f"Saved checkpoint to {file_path} ({len(params)} tensors)")


def load_checkpoint(file_path: Path) -> Tuple[Dict[str, np.ndarray], Optional[Dict]]:
    """
    Load a checkpoint written by save_checkpoint.

    Returns:
        tuple: (parameter name -> float64 array, model description or None)

    Raises:
        ValueError: If the file is missing, corrupt or of an unknown version
    """
    if not file_path.exists():
        raise ValueError(f"Checkpoint file not found: {file_path}")

    blob = file_path.read_bytes()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{file_path} is not a parameter checkpoint")

    version, count = struct.unpack_from("<II", blob, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"Unsupported checkpoint version {version}")

    offset = 16
    params = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=offset).reshape(shape).copy()
        offset += 8 * size

    sidecar = file_path.with_suffix(file_path.suffix + ".json")
    spec = load_json(sidecar) if sidecar.exists() else None

    logger.info(f"Loaded checkpoint from {file_path} ({count} tensors)")
    return params, spec


if __name__ == "__main__":
    """Test helper functions."""
    print("Testing helper utilities...")

    test_df = pd.DataFrame({"a": [1, 2, 3], "b": [4.0, 5.0, 6.0]})

    print("\n✓ Schema validation:")
    validate_dataframe_schema(test_df, ["a", "b"], raise_error=False)

    print("\n✓ All helper utilities loaded successfully")
