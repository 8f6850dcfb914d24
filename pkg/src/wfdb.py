"""
WFDB reader module.

Parses PhysioNet WFDB headers (``.hea``), packed signal files (``.dat`` in
formats 212, 16 and 61) and MIT-format annotation files (``.atr``, ``.apn``),
and maps beat annotations to the five AAMI EC57 classes.

Every parser works on in-memory bytes and keeps no state, so records can be
read concurrently.
"""

import re
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from src.config import AAMI_BEAT_GROUPS
from src.helpers import TruncatedSignalError, WfdbParseError
from src.logger import get_logger

logger = get_logger(__name__)


# ============================================================================
# CONSTANTS
# ============================================================================

SUPPORTED_FORMATS = (212, 16, 61)

DEFAULT_GAIN = 200.0

# Smallest and largest storable value per format; WFDB reserves the minimum
# as the "invalid sample" marker.
FORMAT_LIMITS: Dict[int, tuple] = {
    212: (-2048, 2047),
    16: (-32768, 32767),
    61: (-32768, 32767),
}

# Annotation pseudo-codes
SKIP = 59
NUM = 60
SUB = 61
CHN = 62
AUX = 63

# Mnemonics for stored annotation codes (annot.c, WFDB 10.5.24)
ANNOTATION_SYMBOLS: Dict[int, str] = {
    1: "N", 2: "L", 3: "R", 4: "a", 5: "V", 6: "F", 7: "J", 8: "A", 9: "S",
    10: "E", 11: "j", 12: "/", 13: "Q", 14: "~", 16: "|", 18: "s", 19: "T",
    20: "*", 21: "D", 22: "\\", 23: "=", 24: "p", 25: "B", 26: "^", 27: "t",
    28: "+", 29: "u", 30: "?", 31: "!", 32: "[", 33: "]", 34: "e", 35: "n",
    36: "@", 37: "x", 38: "f", 39: "(", 40: ")", 41: "r",
}

_FORMAT_TOKEN = re.compile(r"^(\d+)(?:x(\d+))?(?::(\d+))?(?:\+(\d+))?$")
_GAIN_TOKEN = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)(?:\(([-+]?\d+)\))?(?:/(\S+))?$")
_FREQUENCY_TOKEN = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)(?:/[^(]+)?(?:\(.*\))?$")


# ============================================================================
# DOMAIN TYPES
# ============================================================================

class AamiClass(IntEnum):
    """AAMI EC57 heartbeat classes; the value is the class index."""

    N = 0
    S = 1
    V = 2
    F = 3
    Q = 4


_AAMI_LOOKUP: Dict[str, AamiClass] = {
    symbol: AamiClass[group]
    for group, symbols in AAMI_BEAT_GROUPS.items()
    for symbol in symbols
}


@dataclass
class SignalSpec:
    """One signal line of a header."""

    filename: str
    storage_format: int
    adc_gain: float = DEFAULT_GAIN
    baseline: int = 0
    units: str = "mV"
    adc_resolution: int = 0
    adc_zero: int = 0
    initial_value: int = 0
    checksum: Optional[int] = None
    byte_offset: int = 0
    description: str = ""


@dataclass
class RecordHeader:
    record_name: str
    n_signals: int
    sampling_frequency: float
    n_samples: int
    signals: List[SignalSpec] = field(default_factory=list)
    comments: List[str] = field(default_factory=list)


@dataclass
class Annotation:
    sample_index: int
    symbol_code: int
    symbol_char: str
    subtype: int = 0
    channel: int = 0
    num: int = 0
    aux_text: Optional[str] = None


@dataclass
class Record:
    """
    A decoded recording.

    ``signals`` holds physical values (one row per channel, mV for ECG
    leads); ``adc`` keeps the raw stored integers.
    """

    header: RecordHeader
    adc: np.ndarray
    signals: np.ndarray
    annotations: List[Annotation] = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.header.record_name

    @property
    def sampling_frequency(self) -> float:
        return self.header.sampling_frequency


# ============================================================================
# HEADER
# ============================================================================

def _to_int(token: str, what: str, line_no: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise WfdbParseError(f"non-numeric {what} '{token}'", line_no) from None


def _parse_record_line(tokens: List[str], line_no: int) -> RecordHeader:
    if len(tokens) < 2:
        raise WfdbParseError("record line needs at least a name and a signal count", line_no)

    if "/" in tokens[0]:
        raise WfdbParseError(f"multi-segment record '{tokens[0]}' is not supported", line_no)

    n_signals = _to_int(tokens[1], "signal count", line_no)
    if n_signals < 1:
        raise WfdbParseError(f"signal count must be at least 1 (got {n_signals})", line_no)

    if len(tokens) < 3:
        raise WfdbParseError("record line has no sampling frequency", line_no)
    match = _FREQUENCY_TOKEN.match(tokens[2])
    if match is None:
        raise WfdbParseError(f"non-numeric sampling frequency '{tokens[2]}'", line_no)
    fs = float(match.group(1))
    if fs <= 0:
        raise WfdbParseError(f"sampling frequency must be positive (got {fs})", line_no)

    if len(tokens) < 4:
        raise WfdbParseError("record line has no sample count", line_no)
    n_samples = _to_int(tokens[3], "sample count", line_no)
    if n_samples <= 0:
        raise WfdbParseError(f"sample count must be positive (got {n_samples})", line_no)

    return RecordHeader(
        record_name=tokens[0],
        n_signals=n_signals,
        sampling_frequency=fs,
        n_samples=n_samples,
    )


def _parse_signal_line(tokens: List[str], line_no: int) -> SignalSpec:
    if len(tokens) < 2:
        raise WfdbParseError("signal line needs a file name and a format", line_no)

    match = _FORMAT_TOKEN.match(tokens[1])
    if match is None:
        raise WfdbParseError(f"malformed format field '{tokens[1]}'", line_no)
    storage_format = int(match.group(1))
    if storage_format not in SUPPORTED_FORMATS:
        raise WfdbParseError(
            f"unsupported storage format {storage_format} (supported: {SUPPORTED_FORMATS})", line_no
        )
    if match.group(2) and int(match.group(2)) != 1:
        raise WfdbParseError("multiple samples per frame are not supported", line_no)
    if match.group(3) and int(match.group(3)) != 0:
        raise WfdbParseError("skewed signals are not supported", line_no)

    spec = SignalSpec(
        filename=tokens[0],
        storage_format=storage_format,
        byte_offset=int(match.group(4) or 0),
    )

    baseline = None
    if len(tokens) > 2:
        gain_match = _GAIN_TOKEN.match(tokens[2])
        if gain_match is None:
            raise WfdbParseError(f"malformed gain field '{tokens[2]}'", line_no)
        gain = float(gain_match.group(1))
        # gain 0 marks an uncalibrated signal
        spec.adc_gain = gain if gain != 0 else DEFAULT_GAIN
        if gain_match.group(2) is not None:
            baseline = int(gain_match.group(2))
        if gain_match.group(3):
            spec.units = gain_match.group(3)
    if len(tokens) > 3:
        spec.adc_resolution = _to_int(tokens[3], "ADC resolution", line_no)
    if len(tokens) > 4:
        spec.adc_zero = _to_int(tokens[4], "ADC zero", line_no)
    if len(tokens) > 5:
        spec.initial_value = _to_int(tokens[5], "initial value", line_no)
    if len(tokens) > 6:
        spec.checksum = _to_int(tokens[6], "checksum", line_no)
    if len(tokens) > 8:
        spec.description = " ".join(tokens[8:])

    # an omitted baseline equals the ADC zero
    spec.baseline = baseline if baseline is not None else spec.adc_zero
    return spec


def parse_header(content) -> RecordHeader:
    """
    Parse the text of a ``.hea`` file.

    Args:
        content: Header bytes or text

    Returns:
        RecordHeader: Record metadata with every signal resolved

    Raises:
        WfdbParseError: On a malformed line; the error carries its line number
    """
    if isinstance(content, bytes):
        content = content.decode("latin-1")

    header = None
    for line_no, raw in enumerate(content.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if header is not None:
                header.comments.append(line.lstrip("#").strip())
            continue

        tokens = line.split()
        if header is None:
            header = _parse_record_line(tokens, line_no)
        elif len(header.signals) < header.n_signals:
            header.signals.append(_parse_signal_line(tokens, line_no))
        else:
            raise WfdbParseError("more signal lines than declared", line_no)

    if header is None:
        raise WfdbParseError("header has no record line", 1)
    if len(header.signals) != header.n_signals:
        raise WfdbParseError(
            f"header declares {header.n_signals} signals but describes {len(header.signals)}"
        )
    return header


# ============================================================================
# SIGNAL FILES
# ============================================================================

def _signal_group(header: RecordHeader, filename: Optional[str]) -> List[int]:
    if filename is None:
        filename = header.signals[0].filename
    group = [i for i, spec in enumerate(header.signals) if spec.filename == filename]
    if not group:
        raise WfdbParseError(f"no signal of {header.record_name} is stored in '{filename}'")
    formats = {header.signals[i].storage_format for i in group}
    if len(formats) != 1:
        raise WfdbParseError(f"signals in '{filename}' mix storage formats {sorted(formats)}")
    return group


def _decode_212(buffer: np.ndarray, total: int) -> np.ndarray:
    if len(buffer) % 3:
        buffer = np.concatenate([buffer, np.zeros(3 - len(buffer) % 3, dtype=np.uint8)])
    triplets = buffer.reshape(-1, 3).astype(np.int32)

    flat = np.empty(2 * len(triplets), dtype=np.int32)
    flat[0::2] = triplets[:, 0] | ((triplets[:, 1] & 0x0F) << 8)
    flat[1::2] = triplets[:, 2] | ((triplets[:, 1] & 0xF0) << 4)
    flat = flat[:total]

    flat[flat > 2047] -= 4096
    return flat


def decode_signal(header: RecordHeader, dat_bytes: bytes, filename: Optional[str] = None) -> np.ndarray:
    """
    Decode the stored integers of one signal file.

    Args:
        header: Parsed record header
        dat_bytes: Content of the signal file
        filename: Which signal file of the record this is (defaults to the
            file of signal 0)

    Returns:
        np.ndarray: int64 array of shape (signals in file, n_samples)

    Raises:
        TruncatedSignalError: If the file holds fewer bytes than declared
    """
    group = _signal_group(header, filename)
    spec = header.signals[group[0]]
    n_channels = len(group)
    total = header.n_samples * n_channels

    if spec.storage_format == 212:
        n_bytes = (3 * total + 1) // 2
    else:
        n_bytes = 2 * total

    expected = spec.byte_offset + n_bytes
    if len(dat_bytes) < expected:
        raise TruncatedSignalError(expected, len(dat_bytes))
    if len(dat_bytes) > expected:
        logger.debug(f"{spec.filename}: ignoring {len(dat_bytes) - expected} trailing bytes")

    payload = dat_bytes[spec.byte_offset:expected]
    if spec.storage_format == 212:
        flat = _decode_212(np.frombuffer(payload, dtype=np.uint8), total)
    elif spec.storage_format == 16:
        flat = np.frombuffer(payload, dtype="<i2")
    else:
        flat = np.frombuffer(payload, dtype=">i2")

    return flat.astype(np.int64).reshape(header.n_samples, n_channels).T.copy()


def to_physical(adc: np.ndarray, spec: SignalSpec) -> np.ndarray:
    """Convert stored integers to physical units: (adc - baseline) / gain."""
    return (np.asarray(adc, dtype=np.float64) - spec.baseline) / spec.adc_gain


# ============================================================================
# ANNOTATIONS
# ============================================================================

def annotation_symbol(code: int) -> str:
    """Mnemonic of a stored annotation code, ``[code]`` for unnamed codes."""
    return ANNOTATION_SYMBOLS.get(code, f"[{code}]")


def parse_annotations(data: bytes) -> List[Annotation]:
    """
    Decode an MIT-format annotation file.

    Each 16-bit little-endian word carries a 6-bit type code and a 10-bit
    time delta. Pseudo-codes SKIP (long time jump), NUM, SUB, CHN and AUX
    modify the stream or the preceding annotation and are never emitted.

    Args:
        data: Content of the ``.atr`` / ``.apn`` file

    Returns:
        list: Annotations with absolute sample indices

    Raises:
        WfdbParseError: Odd byte count, AUX overrun, decreasing sample
            index or missing 0x0000 terminator
    """
    if len(data) % 2:
        raise WfdbParseError(f"annotation stream has odd length {len(data)}")

    words = np.frombuffer(data, dtype="<u2")
    n_words = len(words)

    annotations: List[Annotation] = []
    time = 0
    num = 0
    channel = 0
    i = 0

    while i < n_words:
        word = int(words[i])
        code = word >> 10
        value = word & 0x3FF
        i += 1

        if code == 0 and value == 0:
            return annotations

        if code == SKIP:
            if i + 2 > n_words:
                raise WfdbParseError("SKIP interval overruns the annotation stream")
            interval = (int(words[i]) << 16) | int(words[i + 1])
            if interval >= 1 << 31:
                interval -= 1 << 32
            time += interval
            i += 2
            continue

        if code == NUM:
            num = value - 1024 if value >= 512 else value
            if annotations:
                annotations[-1].num = num
            continue

        if code == SUB:
            if annotations:
                annotations[-1].subtype = value - 1024 if value >= 512 else value
            continue

        if code == CHN:
            channel = value
            if annotations:
                annotations[-1].channel = channel
            continue

        if code == AUX:
            n_bytes = value + (value & 1)
            start = 2 * i
            if start + n_bytes > len(data):
                raise WfdbParseError(f"AUX field of {value} bytes overruns the annotation stream")
            text = data[start:start + value].decode("latin-1").rstrip("\x00")
            if annotations:
                annotations[-1].aux_text = text
            i += n_bytes // 2
            continue

        time += value
        if code == 0:
            continue

        if annotations and time < annotations[-1].sample_index:
            raise WfdbParseError(
                f"annotation time decreases from {annotations[-1].sample_index} to {time}"
            )
        annotations.append(Annotation(
            sample_index=time,
            symbol_code=code,
            symbol_char=annotation_symbol(code),
            channel=channel,
            num=num,
        ))

    raise WfdbParseError("annotation stream has no 0x0000 terminator")


def map_beat_to_aami(symbol_char: str) -> Optional[AamiClass]:
    """
    AAMI class of a beat mnemonic.

    Returns:
        AamiClass or None for non-beat and unmapped beat mnemonics
    """
    return _AAMI_LOOKUP.get(symbol_char)


# ============================================================================
# RECORDS
# ============================================================================

def read_record(record_path: Path, annotation_extension: Optional[str] = None) -> Record:
    """
    Read a record from disk.

    Args:
        record_path: Path without extension (e.g. ``data_raw/mitdb/100``)
        annotation_extension: Annotation file suffix to load, e.g. ``"atr"``

    Returns:
        Record: Header, raw and physical signals, annotations

    Raises:
        FileNotFoundError: If a referenced file is missing
        WfdbParseError: On malformed content
    """
    record_path = Path(record_path)
    header = parse_header((record_path.parent / f"{record_path.name}.hea").read_bytes())

    groups: "OrderedDict[str, List[int]]" = OrderedDict()
    for index, spec in enumerate(header.signals):
        groups.setdefault(spec.filename, []).append(index)

    adc = np.empty((header.n_signals, header.n_samples), dtype=np.int64)
    for filename, indices in groups.items():
        decoded = decode_signal(header, (record_path.parent / filename).read_bytes(), filename)
        adc[indices] = decoded

    signals = np.vstack([to_physical(adc[i], spec) for i, spec in enumerate(header.signals)])

    annotations: List[Annotation] = []
    if annotation_extension:
        annotation_path = record_path.parent / f"{record_path.name}.{annotation_extension}"
        annotations = parse_annotations(annotation_path.read_bytes())

    logger.debug(
        f"Read record {header.record_name}: {header.n_signals} signals x {header.n_samples} samples, "
        f"{len(annotations)} annotations"
    )
    return Record(header=header, adc=adc, signals=signals, annotations=annotations)
