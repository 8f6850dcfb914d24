"""
Unit tests for data ingestion.

Builds small WFDB databases on disk and runs the ingester over them.
"""

import shutil
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

import src.data_ingest as data_ingest
from src.data_ingest import DataIngester, check_targets, load_segments
from src.dataset import SegmentSet
from src.helpers import ChecksumMismatchError, DataNotFoundError, load_json, sha256_file
from tests.test_wfdb import encode_annotations, write_record


def write_checksums(directory: Path) -> None:
    lines = [f"{sha256_file(p)}  {p.relative_to(directory).as_posix()}"
             for p in sorted(directory.rglob("*")) if p.is_file() and p.name != "SHA256SUMS.txt"]
    (directory / "SHA256SUMS.txt").write_text("\n".join(lines) + "\n")


@pytest.fixture
def mitdb(tmp_path, monkeypatch):
    """Two 1000-sample records, each with an N beat, a V beat and a beat too close to the start."""
    monkeypatch.setattr(data_ingest, "MITBIH_RECORDS", ["100", "101"])
    database = tmp_path / "raw" / "mitdb"
    database.mkdir(parents=True)
    for name in ("100", "101"):
        adc = (100 * np.sin(np.arange(1000) / 20.0)).astype(np.int64)[np.newaxis, :]
        write_record(database, name, adc, fmt=212, fs=360)
        (database / f"{name}.atr").write_bytes(encode_annotations([(50, 1), (300, 1), (600, 5)]))
    write_checksums(database)
    return tmp_path


def make_ingester(root: Path, **kwargs) -> DataIngester:
    return DataIngester("mitbih", data_dir=root / "raw", out_dir=root / "cache", n_jobs=1, **kwargs)


class TestDataIngester:
    """Test suite for DataIngester class."""

    def test_locate_records(self, mitdb):
        entries = make_ingester(mitdb).locate_records()
        assert [e.path.name for e in entries] == ["100", "101"]

    def test_missing_records(self, mitdb):
        (mitdb / "raw" / "mitdb" / "101.atr").unlink()
        with pytest.raises(DataNotFoundError) as excinfo:
            make_ingester(mitdb).locate_records()
        assert "101" in str(excinfo.value)

    def test_record_files(self, mitdb):
        ingester = make_ingester(mitdb)
        files = ingester.record_files(ingester.locate_records()[0])
        assert [p.name for p in files] == ["100.hea", "100.dat", "100.atr"]

    def test_verify(self, mitdb):
        ingester = make_ingester(mitdb)
        assert ingester.verify(ingester.locate_records()) == 6

    def test_verify_detects_corruption(self, mitdb):
        dat = mitdb / "raw" / "mitdb" / "100.dat"
        payload = dat.read_bytes()
        dat.write_bytes(bytes([payload[0] ^ 0xFF]) + payload[1:])
        ingester = make_ingester(mitdb)
        with pytest.raises(ChecksumMismatchError):
            ingester.verify(ingester.locate_records())

    def test_verify_without_listing(self, mitdb):
        (mitdb / "raw" / "mitdb" / "SHA256SUMS.txt").unlink()
        ingester = make_ingester(mitdb)
        assert ingester.verify(ingester.locate_records()) == 0

    def test_run(self, mitdb):
        result = make_ingester(mitdb).run()

        assert len(result.segments) == 4
        assert result.segments.labels.tolist() == [0, 2, 0, 2]
        assert result.segments.sources == [("100", 300), ("100", 600), ("101", 300), ("101", 600)]
        assert result.report["per_record"] == {"100": 2, "101": 2}
        assert result.report["diagnostics"] == {"<boundary>": 2}
        assert not result.meets_targets

        cache = mitdb / "cache"
        assert load_json(cache / "ingestion_mitbih.json")["total"] == 4
        assert "<boundary>\t2" in (cache / "diagnostics_mitbih.txt").read_text()

    def test_run_is_deterministic(self, mitdb):
        make_ingester(mitdb).run()
        first = (mitdb / "cache" / "segments_mitbih.bin").read_bytes()
        make_ingester(mitdb).run()
        assert (mitdb / "cache" / "segments_mitbih.bin").read_bytes() == first

    def test_load_segments(self, mitdb):
        result = make_ingester(mitdb).run()
        loaded = load_segments("mitbih", mitdb / "cache")

        np.testing.assert_array_equal(loaded.samples, result.segments.samples)
        np.testing.assert_array_equal(loaded.labels, result.segments.labels)
        assert loaded.sources == result.segments.sources
        assert loaded.label_names == ["N", "S", "V", "F", "Q"]

    def test_load_segments_wrong_task(self, mitdb):
        make_ingester(mitdb).run()
        cache = mitdb / "cache"
        shutil.copy(cache / "segments_mitbih.bin", cache / "segments_apnea.bin")
        with pytest.raises(ValueError):
            load_segments("apnea", cache)
        with pytest.raises(ValueError):
            load_segments("ecgid", cache)


class TestEcgidLayout:
    """Test suite for locating ECG-ID person directories."""

    @pytest.fixture
    def ecgiddb(self, tmp_path, monkeypatch):
        monkeypatch.setattr(data_ingest, "ECGID_PERSONS", 2)
        database = tmp_path / "raw" / "ecgiddb"
        adc = np.zeros((1, 1500), dtype=np.int64)
        for person, recordings in (("Person_01", [1, 2, 10]), ("Person_02", [1])):
            (database / person).mkdir(parents=True)
            for number in recordings:
                write_record(database / person, f"rec_{number}", adc, fmt=16, fs=500)
        return tmp_path

    def test_entries_in_numeric_order(self, ecgiddb):
        ingester = DataIngester("ecgid", data_dir=ecgiddb / "raw", out_dir=ecgiddb / "cache", n_jobs=1)
        entries = ingester.locate_records()

        assert [e.name for e in entries] == ["Person_01/rec_1", "Person_01/rec_2", "Person_01/rec_10", "Person_02/rec_1"]
        assert [e.label for e in entries] == [0, 0, 0, 1]

    def test_missing_person(self, ecgiddb):
        shutil.rmtree(ecgiddb / "raw" / "ecgiddb" / "Person_02")
        ingester = DataIngester("ecgid", data_dir=ecgiddb / "raw", out_dir=ecgiddb / "cache", n_jobs=1)
        with pytest.raises(DataNotFoundError):
            ingester.locate_records()

    def test_flat_recordings_yield_no_segments(self, ecgiddb):
        ingester = DataIngester("ecgid", data_dir=ecgiddb / "raw", out_dir=ecgiddb / "cache", n_jobs=1)
        result = ingester.run()
        assert len(result.segments) == 0
        assert result.report["diagnostics"] == {"<no cardiac cycle>": 4}


class TestCheckTargets:
    """Test suite for segment-count targets."""

    def _segments(self, task, counts, names):
        labels = np.repeat(np.arange(len(counts)), counts)
        return SegmentSet(task, np.zeros((len(labels), 1, 1), dtype=np.float32), labels,
                          [("r", i) for i in range(len(labels))], names)

    def test_mitbih_exact_counts(self):
        counts = [90593, 2781, 7235, 802, 8040]
        assert check_targets(self._segments("mitbih", counts, ["N", "S", "V", "F", "Q"])) == []

        counts[1] -= 1
        problems = check_targets(self._segments("mitbih", counts, ["N", "S", "V", "F", "Q"]))
        assert len(problems) == 2  # total and class S

    def test_apnea_tolerances(self):
        assert check_targets(self._segments("apnea", [9955, 5925], ["N", "A"])) == []
        assert check_targets(self._segments("apnea", [10000, 6000], ["N", "A"])) == []

        problems = check_targets(self._segments("apnea", [12000, 2000], ["N", "A"]))
        assert any("fraction" in p for p in problems)

    def test_ecgid_persons(self):
        names = [f"Person_{i:02d}" for i in range(1, 91)]
        counts = [27] * 90
        counts[0] += 26
        assert check_targets(self._segments("ecgid", counts, names)) == []

        counts[5] = 0
        assert any("persons" in p for p in check_targets(self._segments("ecgid", counts, names)))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
