"""
Unit tests for the WFDB reader.

Tests header parsing, the 212/16/61 signal decoders, the annotation stream
decoder and AAMI beat mapping. Records are synthesized on the fly; when the
``wfdb`` package is installed the decoders are also compared against it.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.helpers import TruncatedSignalError, WfdbParseError
from src.wfdb import (
    AUX,
    CHN,
    NUM,
    SKIP,
    SUB,
    AamiClass,
    decode_signal,
    map_beat_to_aami,
    parse_annotations,
    parse_header,
    read_record,
    to_physical,
)

MITBIH_HEADER = """100 2 360 650000 0:0:0 0/0/0
100.dat 212 200 11 1024 995 -22131 0 MLII
100.dat 212 200 11 1024 1011 20052 0 V5
# 69 M 1085 1629 x1
"""


# ============================================================================
# SYNTHETIC WRITERS
# ============================================================================

def encode_212(samples: np.ndarray) -> bytes:
    """Pack interleaved integers into format 212."""
    values = np.asarray(samples, dtype=np.int64).ravel() & 0xFFF
    total = len(values)
    if total % 2:
        values = np.append(values, 0)
    first, second = values[0::2], values[1::2]
    packed = np.empty(3 * len(first), dtype=np.uint8)
    packed[0::3] = first & 0xFF
    packed[1::3] = ((first >> 8) & 0x0F) | ((second >> 4) & 0xF0)
    packed[2::3] = second & 0xFF
    return packed[:(3 * total + 1) // 2].tobytes()


def encode_annotations(events, aux=None) -> bytes:
    """
    Encode (sample, code) events as an MIT annotation stream.

    Args:
        events: Sorted (sample index, type code) pairs
        aux: Optional {event position: text} to attach AUX strings
    """
    aux = aux or {}
    words = []
    previous = 0
    for position, (sample, code) in enumerate(events):
        delta = sample - previous
        if delta > 1023:
            words += [SKIP << 10, (delta >> 16) & 0xFFFF, delta & 0xFFFF]
            delta = 0
        words.append((code << 10) | delta)
        previous = sample
        if position in aux:
            text = aux[position].encode("latin-1")
            words.append((AUX << 10) | len(text))
            if len(text) % 2:
                text += b"\x00"
            words += list(np.frombuffer(text, dtype="<u2"))
    words.append(0)
    return np.asarray(words, dtype="<u2").tobytes()


def write_record(directory: Path, name: str, adc: np.ndarray, fmt: int = 212, fs: int = 360) -> Path:
    """Write a header plus signal file holding adc (channels x samples)."""
    n_channels, n_samples = adc.shape
    lines = [f"{name} {n_channels} {fs} {n_samples}"]
    for channel in range(n_channels):
        lines.append(f"{name}.dat {fmt} 200 11 0 {int(adc[channel, 0])} 0 0 ECG{channel}")
    (directory / f"{name}.hea").write_text("\n".join(lines) + "\n")

    frames = adc.T.ravel()
    if fmt == 212:
        payload = encode_212(frames)
    elif fmt == 16:
        payload = frames.astype("<i2").tobytes()
    else:
        payload = frames.astype(">i2").tobytes()
    (directory / f"{name}.dat").write_bytes(payload)
    return directory / name


# ============================================================================
# HEADER
# ============================================================================

class TestParseHeader:
    """Test suite for .hea parsing."""

    def test_mitbih_header(self):
        header = parse_header(MITBIH_HEADER)

        assert header.record_name == "100"
        assert header.n_signals == 2
        assert header.sampling_frequency == 360.0
        assert header.n_samples == 650000
        first = header.signals[0]
        assert first.storage_format == 212
        assert first.adc_gain == 200.0
        assert first.adc_resolution == 11
        assert first.adc_zero == 1024
        assert first.baseline == 1024
        assert first.initial_value == 995
        assert first.description == "MLII"
        assert header.comments == ["69 M 1085 1629 x1"]

    def test_gain_with_baseline_and_units(self):
        header = parse_header("r 1 500 10\nr.dat 16 1000(-5)/uV 12 0 0 0 0 lead I\n")
        spec = header.signals[0]
        assert spec.adc_gain == 1000.0
        assert spec.baseline == -5
        assert spec.units == "uV"
        assert spec.description == "lead I"

    def test_zero_gain_defaults(self):
        header = parse_header("r 1 100 10\nr.dat 16 0 16 0 0\n")
        assert header.signals[0].adc_gain == 200.0

    def test_frequency_with_counter(self):
        header = parse_header(b"r 1 100/1(0) 10\nr.dat 16\n")
        assert header.sampling_frequency == 100.0

    def test_format_with_byte_offset(self):
        header = parse_header("r 1 100 10\nr.dat 16+24 200\n")
        assert header.signals[0].byte_offset == 24

    @pytest.mark.parametrize("text,line", [
        ("r 1 360 10\nr.dat 80 200\n", 2),
        ("r 1 360 ten\nr.dat 212 200\n", 1),
        ("r 1 abc 10\nr.dat 212 200\n", 1),
        ("r/seg 1 360 10\nr.dat 212 200\n", 1),
        ("r 1 360 10\nr.dat 212 200 11 zero\n", 2),
        ("r 1 360 10\nr.dat 212x2 200\n", 2),
    ])
    def test_malformed_lines_report_position(self, text, line):
        with pytest.raises(WfdbParseError) as excinfo:
            parse_header(text)
        assert excinfo.value.line == line

    def test_signal_count_mismatch(self):
        with pytest.raises(WfdbParseError, match="declares 2"):
            parse_header("r 2 360 10\nr.dat 212 200\n")
        with pytest.raises(WfdbParseError):
            parse_header("r 1 360 10\nr.dat 212 200\nr.dat 212 200\n")

    def test_empty_header(self):
        with pytest.raises(WfdbParseError):
            parse_header("# only a comment\n")


# ============================================================================
# SIGNALS
# ============================================================================

class TestDecodeSignal:
    """Test suite for signal decoding."""

    def test_format_212_known_bytes(self):
        """Two samples share three bytes; the high nibbles sit in the middle byte."""
        header = parse_header("r 1 360 2\nr.dat 212 200\n")
        decoded = decode_signal(header, bytes([0x01, 0xF0, 0xFF]))
        np.testing.assert_array_equal(decoded, [[1, -1]])

        decoded = decode_signal(header, bytes([0x00, 0x08, 0x00]))
        assert decoded[0, 0] == -2048

    def test_format_212_extremes_odd_length(self):
        values = np.array([[0, 2047, -2048, -1, 5]])
        header = parse_header("r 1 360 5\nr.dat 212 200\n")
        payload = encode_212(values.ravel())

        assert len(payload) == 8
        np.testing.assert_array_equal(decode_signal(header, payload), values)

    def test_format_212_two_channels(self):
        adc = np.array([[10, 20, 30], [-10, -20, -30]])
        header = parse_header("r 2 360 3\nr.dat 212 200\nr.dat 212 200\n")
        np.testing.assert_array_equal(decode_signal(header, encode_212(adc.T.ravel())), adc)

    def test_format_16_and_61_byte_order(self):
        values = np.array([1, -2, 300, -32768])
        little = parse_header("r 1 500 4\nr.dat 16 200\n")
        big = parse_header("r 1 500 4\nr.dat 61 200\n")

        np.testing.assert_array_equal(decode_signal(little, values.astype("<i2").tobytes())[0], values)
        np.testing.assert_array_equal(decode_signal(big, values.astype(">i2").tobytes())[0], values)

    def test_byte_offset_skipped(self):
        header = parse_header("r 1 500 2\nr.dat 16+4 200\n")
        payload = b"\xAA" * 4 + np.array([7, 8], dtype="<i2").tobytes()
        np.testing.assert_array_equal(decode_signal(header, payload)[0], [7, 8])

    def test_truncated_file(self):
        header = parse_header("r 1 360 10\nr.dat 212 200\n")
        with pytest.raises(TruncatedSignalError) as excinfo:
            decode_signal(header, b"\x00" * 10)
        assert excinfo.value.expected == 15
        assert excinfo.value.actual == 10

    def test_to_physical(self):
        header = parse_header("r 1 360 3\nr.dat 212 200(1024) 11 1024\n")
        physical = to_physical(np.array([1024, 1224, 824]), header.signals[0])
        np.testing.assert_allclose(physical, [0.0, 1.0, -1.0])


# ============================================================================
# ANNOTATIONS
# ============================================================================

class TestParseAnnotations:
    """Test suite for MIT annotation streams."""

    def test_simple_beats(self):
        stream = encode_annotations([(18, 28), (77, 1), (370, 1), (662, 8)])
        annotations = parse_annotations(stream)

        assert [a.sample_index for a in annotations] == [18, 77, 370, 662]
        assert [a.symbol_char for a in annotations] == ["+", "N", "N", "A"]

    def test_skip_moves_time(self):
        stream = encode_annotations([(100, 1), (100 + 70000, 5)])
        annotations = parse_annotations(stream)
        assert annotations[1].sample_index == 70100
        assert annotations[1].symbol_char == "V"

    def test_aux_text_attached(self):
        stream = encode_annotations([(10, 28), (20, 1)], aux={0: "(N"})
        annotations = parse_annotations(stream)
        assert annotations[0].aux_text == "(N"
        assert annotations[1].aux_text is None

    def test_modifier_codes(self):
        words = [
            (1 << 10) | 5,
            (SUB << 10) | 3,
            (CHN << 10) | 1,
            (NUM << 10) | 1020,
            (5 << 10) | 10,
            0,
        ]
        annotations = parse_annotations(np.asarray(words, dtype="<u2").tobytes())

        assert annotations[0].subtype == 3
        assert annotations[0].channel == 1
        assert annotations[0].num == -4
        # channel and num carry over to later annotations
        assert annotations[1].channel == 1
        assert annotations[1].num == -4
        assert annotations[1].subtype == 0

    def test_apnea_minute_labels(self):
        stream = encode_annotations([(0, 8), (6000, 1), (12000, 8)])
        symbols = [a.symbol_char for a in parse_annotations(stream)]
        assert symbols == ["A", "N", "A"]

    def test_missing_terminator(self):
        words = np.array([(1 << 10) | 5], dtype="<u2")
        with pytest.raises(WfdbParseError, match="terminator"):
            parse_annotations(words.tobytes())

    def test_odd_length(self):
        with pytest.raises(WfdbParseError, match="odd"):
            parse_annotations(b"\x00\x00\x00")

    def test_aux_overrun(self):
        words = np.array([(1 << 10) | 5, (AUX << 10) | 40, 0], dtype="<u2")
        with pytest.raises(WfdbParseError, match="AUX"):
            parse_annotations(words.tobytes())

    def test_decreasing_time(self):
        back = (-50) & 0xFFFFFFFF
        words = np.array([
            (1 << 10) | 100,
            SKIP << 10, back >> 16, back & 0xFFFF,
            (1 << 10) | 0,
            0,
        ], dtype="<u2")
        with pytest.raises(WfdbParseError, match="decreases"):
            parse_annotations(words.tobytes())


@pytest.mark.parametrize("symbol,expected", [
    ("N", AamiClass.N), ("L", AamiClass.N), ("R", AamiClass.N), ("e", AamiClass.N), ("j", AamiClass.N),
    ("A", AamiClass.S), ("a", AamiClass.S), ("J", AamiClass.S), ("S", AamiClass.S),
    ("V", AamiClass.V), ("E", AamiClass.V),
    ("F", AamiClass.F),
    ("/", AamiClass.Q), ("f", AamiClass.Q), ("Q", AamiClass.Q),
    ("+", None), ("~", None), ("|", None), ("x", None), ("[", None),
])
def test_map_beat_to_aami(symbol, expected):
    assert map_beat_to_aami(symbol) == expected


def test_read_record(tmp_path):
    """Header, signal and annotation files are combined into one record."""
    adc = np.array([[0, 200, -200, 400], [5, 6, 7, 8]])
    path = write_record(tmp_path, "rec", adc)
    (tmp_path / "rec.atr").write_bytes(encode_annotations([(1, 1), (3, 5)]))

    record = read_record(path, "atr")

    assert record.name == "rec"
    assert record.sampling_frequency == 360.0
    np.testing.assert_array_equal(record.adc, adc)
    np.testing.assert_allclose(record.signals[0], [0.0, 1.0, -1.0, 2.0])
    assert [a.symbol_char for a in record.annotations] == ["N", "V"]


def test_read_record_missing_file(tmp_path):
    (tmp_path / "lonely.hea").write_text("lonely 1 360 4\nlonely.dat 212 200\n")
    with pytest.raises(FileNotFoundError):
        read_record(tmp_path / "lonely")


# ============================================================================
# REFERENCE READER
# ============================================================================

class TestAgainstWfdbPackage:
    """Compare the decoders with the reference wfdb package when installed."""

    @pytest.fixture
    def wfdb(self):
        return pytest.importorskip("wfdb")

    @pytest.mark.parametrize("fmt", [212, 16])
    def test_signal_matches(self, wfdb, tmp_path, fmt):
        rng = np.random.default_rng(7)
        adc = rng.integers(-2000, 2000, size=(2, 501))
        path = write_record(tmp_path, "syn", adc, fmt=fmt)

        reference = wfdb.rdrecord(str(path), physical=False)
        ours = read_record(path)

        np.testing.assert_array_equal(ours.adc, reference.d_signal.T)

    def test_annotations_match(self, wfdb, tmp_path):
        adc = np.zeros((1, 100_000), dtype=np.int64)
        path = write_record(tmp_path, "ann", adc)
        events = [(10, 28), (400, 1), (2000, 5), (90_000, 1)]
        (tmp_path / "ann.atr").write_bytes(encode_annotations(events))

        reference = wfdb.rdann(str(path), "atr")
        ours = parse_annotations((tmp_path / "ann.atr").read_bytes())

        assert [a.sample_index for a in ours] == list(reference.sample)
        assert [a.symbol_char for a in ours] == list(reference.symbol)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
