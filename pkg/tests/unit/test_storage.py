#!/usr/bin/env python3
"""
Tests for CSV tables, sidecars, diagnostics and the scan journal
"""

import json

import numpy as np
import pytest

from ionization_lab.core.atom import BoundState
from ionization_lab.models import CellFailure, ConvergencePoint, DelayEntry, DelayReport, ScanResult
from ionization_lab.storage import (
    SCAN_COLUMNS,
    DiagnosticsStream,
    ScanJournal,
    read_scan,
    read_table,
    sidecar_path,
    write_table,
)
from ionization_lab.utils import StorageError
from tests.fixtures.test_data import SAMPLE_JOURNAL_RECORDS


@pytest.fixture
def scan_result():
    table = np.array([[1.0e-6, -2.5e-7, 3.0e-6], [np.nan, 4.0e-6, 5.123456789012345e-6]])
    return ScanResult(
        e0_values=[0.05, 0.06],
        tau_values=[100.0, 150.0, 200.0],
        delta_p=table,
        baseline=[1e-3, 2e-3],
        alpha=0.001,
        epsilon=0.314,
        omega=0.02,
        n_cycles=1,
        fingerprint="abc123",
        failures=[CellFailure(1, 0, "propagation unstable")],
    )


@pytest.fixture
def journal(tmp_path):
    return ScanJournal(tmp_path / "scan.journal.jsonl", "abc123", [0.05, 0.06], [100.0, 150.0])


class TestTables:
    """Tests for fingerprinted CSV tables"""

    def test_write_and_read(self, tmp_path):
        path = write_table(tmp_path / "t.csv", ["a", "b"], [(1, 0.1), (2, None)], "fp")
        lines = path.read_text().splitlines()
        assert lines[0] == "# fingerprint=fp"
        assert lines[1] == "a,b"
        assert lines[2] == "1,0.10000000000000001"
        fingerprint, rows = read_table(path, ["a", "b"])
        assert fingerprint == "fp"
        assert rows == [["1", "0.10000000000000001"], ["2", ""]]

    def test_header_mismatch(self, tmp_path):
        path = write_table(tmp_path / "t.csv", ["a", "b"], [], "fp")
        with pytest.raises(StorageError):
            read_table(path, ["a", "c"])

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("a,b\n1,2\n3\n")
        with pytest.raises(StorageError) as exc_info:
            read_table(path, ["a", "b"])
        assert "data row 2" in str(exc_info.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(StorageError):
            read_table(tmp_path / "absent.csv", ["a"])


class TestScanFiles:
    """Tests for scan CSV and sidecar round trips"""

    def test_failed_cells_omitted(self, result_storage, scan_result):
        path = result_storage.write_scan(scan_result, extra={"stats": {"failed_jobs": 1}})
        _, rows = read_table(path, SCAN_COLUMNS)
        assert len(rows) == 5
        meta = json.loads(sidecar_path(path).read_text())
        assert meta["fingerprint"] == "abc123"
        assert meta["failures"] == [{"e0_index": 1, "tau_index": 0, "message": "propagation unstable"}]
        assert meta["stats"] == {"failed_jobs": 1}
        assert meta["kick_area"] == pytest.approx(0.001 * np.sqrt(np.pi))

    def test_read_back(self, result_storage, scan_result):
        path = result_storage.write_scan(scan_result)
        loaded = read_scan(path)
        np.testing.assert_array_equal(loaded.e0_values, scan_result.e0_values)
        np.testing.assert_array_equal(loaded.tau_values, scan_result.tau_values)
        assert np.isnan(loaded.delta_p[1, 0])
        assert loaded.delta_p[1, 2] == scan_result.delta_p[1, 2]
        assert loaded.fingerprint == "abc123"
        assert loaded.alpha == 0.001
        assert [(f.e0_index, f.tau_index) for f in loaded.failures] == [(1, 0)]

    def test_fallback_without_sidecar(self, result_storage, scan_result):
        path = result_storage.write_scan(scan_result)
        sidecar_path(path).unlink()
        fallback = {"alpha": 0.002, "epsilon": 0.5, "omega": 0.02, "n_cycles": 1}
        assert read_scan(path, fallback).alpha == 0.002
        with pytest.raises(StorageError) as exc_info:
            read_scan(path)
        assert "pulse parameters missing" in str(exc_info.value)

    def test_sentinel_flags_kept(self, result_storage, scan_result):
        scan_result.invalid_cells = [(0, None), (0, 2)]
        path = result_storage.write_scan(scan_result)
        meta = json.loads(sidecar_path(path).read_text())
        assert meta["invalid_cells"] == [{"e0_index": 0, "tau_index": None}, {"e0_index": 0, "tau_index": 2}]
        assert read_scan(path).invalid_cells == [(0, None), (0, 2)]

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "scan.csv"
        path.write_text("E0_au,tau_au,deltaP,baselineP\n0.05,100,oops,0.001\n")
        with pytest.raises(StorageError):
            read_scan(path, {"alpha": 0.001, "epsilon": 0.3, "omega": 0.02, "n_cycles": 1})

    def test_empty_table(self, tmp_path):
        path = write_table(tmp_path / "scan.csv", SCAN_COLUMNS, [], "fp")
        with pytest.raises(StorageError):
            read_scan(path, {"alpha": 0.001, "epsilon": 0.3, "omega": 0.02, "n_cycles": 1})


class TestOtherArtifacts:
    """Tests for delay, spectrum, convergence and run records"""

    def test_delay_table(self, result_storage):
        report = DelayReport(field_peak_time=157.08, tau_step=4.9, entries=[
            DelayEntry(0.05, 0.5, 157.1, 0.02, 0.4837768, 4.9),
            DelayEntry(0.06, 0.5, None, None, None, 4.9, "level outside row range"),
        ], peak_times={0.05: 157.3, 0.06: None})
        path = result_storage.write_delay(report, "fp")
        lines = path.read_text().splitlines()
        assert lines[1] == "E0_au,level,tau_mid_au,delay_au,delay_as,tau_step_au,error"
        assert lines[3].endswith(",,,4.9000000000000004,level outside row range")
        meta = json.loads(sidecar_path(path).read_text())
        assert meta["field_peak_time"] == 157.08
        assert meta["peak_times"] == [{"e0": 0.05, "tau_peak": 157.3}, {"e0": 0.06, "tau_peak": None}]

    def test_eigen_table(self, result_storage):
        states = [BoundState(0, 0, -0.5, np.zeros(3)), BoundState(1, 0, -0.125, np.zeros(3))]
        path = result_storage.write_eigen(states, "fp", extra={"potential": "coulomb"})
        _, rows = read_table(path, ["ell", "n_index", "energy_au"])
        assert rows == [["0", "0", "-0.5"], ["1", "0", "-0.125"]]
        meta = json.loads(sidecar_path(path).read_text())
        assert meta["state_count"] == 2
        assert meta["potential"] == "coulomb"

    def test_convergence_table(self, result_storage):
        points = [ConvergencePoint("dt", 0.02, 0.1), ConvergencePoint("dt", 0.01, None, None, "boom")]
        path = result_storage.write_convergence(points, "fp", name="convergence_dt.csv")
        _, rows = read_table(path, ["parameter", "value", "observable", "relative_change", "error"])
        assert rows[1] == ["dt", "0.01", "", "", "boom"]

    def test_run_record(self, result_storage):
        path = result_storage.write_record({"probability": 0.01, "valid": True})
        assert json.loads(path.read_text()) == {"probability": 0.01, "valid": True}


class TestDiagnosticsStream:
    """Tests for the propagation observer"""

    def test_rows(self, tmp_path, small_projector, small_ground_state):
        path = tmp_path / "diagnostics.csv"
        with DiagnosticsStream(path, "fp", small_projector) as stream:
            stream(0.5, small_ground_state)
            stream(1.0, small_ground_state)
        fingerprint, rows = read_table(path, ["t", "norm", "bound_population"])
        assert fingerprint == "fp"
        assert len(rows) == 2
        assert float(rows[1][1]) == pytest.approx(1.0, abs=1e-12)
        assert float(rows[1][2]) == pytest.approx(1.0, abs=1e-12)


class TestScanJournal:
    """Tests for the resumable scan journal"""

    @pytest.mark.asyncio
    async def test_append_and_load(self, journal):
        await journal.open(resume=False)
        for kind, i, j, value in SAMPLE_JOURNAL_RECORDS:
            await journal.append(kind, i, j, value)
        await journal.close()

        completed = journal.load()
        assert completed == {(kind, i, j): value for kind, i, j, value in SAMPLE_JOURNAL_RECORDS}
        # exact float round trip
        assert completed[("baseline", 0, None)] == SAMPLE_JOURNAL_RECORDS[0][3]

    @pytest.mark.asyncio
    async def test_sentinel_flag_replayed(self, journal):
        await journal.open(resume=False)
        await journal.append("baseline", 0, None, 0.25, valid=False)
        await journal.append("cell", 0, 0, 1.0)
        await journal.append("cell", 0, 1, 2.0, valid=False)
        await journal.close()

        assert journal.load() == {("baseline", 0, None): 0.25, ("cell", 0, 0): 1.0, ("cell", 0, 1): 2.0}
        assert journal.flagged == {("baseline", 0, None), ("cell", 0, 1)}

    @pytest.mark.asyncio
    async def test_missing_journal(self, journal):
        assert journal.load() == {}

    @pytest.mark.asyncio
    async def test_fresh_open_discards_old_records(self, journal):
        await journal.open(resume=False)
        await journal.append("cell", 0, 0, 1.0)
        await journal.close()
        await journal.open(resume=False)
        await journal.close()
        assert journal.load() == {}

    @pytest.mark.asyncio
    async def test_resume_appends(self, journal):
        await journal.open(resume=False)
        await journal.append("cell", 0, 0, 1.0)
        await journal.close()
        await journal.open(resume=True)
        await journal.append("cell", 0, 1, 2.0)
        await journal.close()
        assert journal.load() == {("cell", 0, 0): 1.0, ("cell", 0, 1): 2.0}

    @pytest.mark.asyncio
    async def test_torn_line_discarded(self, journal):
        await journal.open(resume=False)
        await journal.append("cell", 0, 0, 1.0)
        await journal.append("cell", 0, 1, 2.0)
        await journal.close()
        text = journal.path.read_text()
        journal.path.write_text(text[:-15])

        assert journal.load() == {("cell", 0, 0): 1.0}
        await journal.open(resume=True)
        await journal.append("cell", 1, 1, 3.0)
        await journal.close()
        assert journal.load() == {("cell", 0, 0): 1.0, ("cell", 1, 1): 3.0}

    @pytest.mark.asyncio
    async def test_tampered_record(self, journal):
        await journal.open(resume=False)
        await journal.append("cell", 0, 0, 1.0)
        await journal.close()
        lines = journal.path.read_text().splitlines()
        record = json.loads(lines[1])
        record["value"] = 9.0
        journal.path.write_text(lines[0] + "\n" + json.dumps(record) + "\n")
        assert journal.load() == {}

    @pytest.mark.asyncio
    async def test_other_configuration(self, journal, tmp_path):
        await journal.open(resume=False)
        await journal.append("cell", 0, 0, 1.0)
        await journal.close()
        other = ScanJournal(journal.path, "different", [0.05, 0.06], [100.0, 150.0])
        assert other.load() == {}
        other_axes = ScanJournal(journal.path, "abc123", [0.05], [100.0, 150.0])
        assert other_axes.load() == {}

    @pytest.mark.asyncio
    async def test_append_requires_open(self, journal):
        with pytest.raises(StorageError):
            await journal.append("cell", 0, 0, 1.0)
