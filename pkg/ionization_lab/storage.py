"""
Result storage for the ionization lab.

CSV tables (scan surfaces, delay reports, bound-state spectra, convergence
studies, propagation diagnostics), JSON sidecars and single-run records,
and the append-only scan journal used to resume interrupted scans.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Set, Tuple

import aiofiles
import numpy as np

from .core.atom import BoundProjector, BoundState, WaveFunction, bound_population
from .models import CellFailure, ConvergencePoint, DelayReport, ScanResult
from .utils import StorageError, format_float, record_checksum

logger = logging.getLogger("ionization_lab.storage")

SCAN_COLUMNS = ["E0_au", "tau_au", "deltaP", "baselineP"]
DELAY_COLUMNS = ["E0_au", "level", "tau_mid_au", "delay_au", "delay_as", "tau_step_au", "error"]
EIGEN_COLUMNS = ["ell", "n_index", "energy_au"]
CONVERGENCE_COLUMNS = ["parameter", "value", "observable", "relative_change", "error"]
DIAGNOSTIC_COLUMNS = ["t", "norm", "bound_population"]

FINGERPRINT_PREFIX = "# fingerprint="


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.name + ".meta.json")


def write_table(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]], fingerprint: str) -> Path:
    """Write a fingerprinted CSV: comment line, fixed header row, full-precision cells"""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(f"{FINGERPRINT_PREFIX}{fingerprint}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(value) for value in row])
    logger.info(f"Saved table to {path}")
    return path


def read_table(path: Path, columns: Sequence[str]) -> Tuple[Optional[str], List[List[str]]]:
    """Read a fingerprinted CSV, checking its header; returns (fingerprint, rows)"""
    if not path.exists():
        raise StorageError(f"file not found: {path}")
    fingerprint = None
    body = []
    with open(path, newline="") as f:
        for line in f:
            if line.startswith("#"):
                if line.startswith(FINGERPRINT_PREFIX):
                    fingerprint = line[len(FINGERPRINT_PREFIX):].strip()
                continue
            if line.strip():
                body.append(line)
    rows = list(csv.reader(body))
    if not rows or rows[0] != list(columns):
        raise StorageError(f"{path}: expected header {','.join(columns)}")
    for number, row in enumerate(rows[1:], start=1):
        if len(row) != len(columns):
            raise StorageError(f"{path}: data row {number} has {len(row)} fields, expected {len(columns)}")
    return fingerprint, rows[1:]


def save_json(data: Dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2)
    logger.info(f"Saved JSON to {path}")
    return path


def load_json(path: Path) -> Dict[str, Any]:
    try:
        with open(path) as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise StorageError(f"cannot read {path}: {e}")


class ResultStorage:
    """Filesystem storage for every artifact of a run, rooted at one output directory"""

    def __init__(self, base_dir: str = "results"):
        self.base_dir = Path(base_dir)
        self.base_dir.mkdir(parents=True, exist_ok=True)
        logger.info(f"Initialized result storage in {self.base_dir}")

    def path(self, name: str) -> Path:
        return self.base_dir / name

    def write_scan(self, scan: ScanResult, name: str = "scan.csv",
                   extra: Optional[Dict[str, Any]] = None) -> Path:
        """
        Long-format δP table plus `<name>.meta.json`

        Failed cells are left out of the CSV and listed in the sidecar.
        """
        rows = []
        for i, e0 in enumerate(scan.e0_values):
            for j, tau in enumerate(scan.tau_values):
                if np.isfinite(scan.delta_p[i, j]):
                    rows.append((float(e0), float(tau), float(scan.delta_p[i, j]), float(scan.baseline[i])))
        path = write_table(self.path(name), SCAN_COLUMNS, rows, scan.fingerprint)
        save_json({**scan.to_dict(), **(extra or {})}, sidecar_path(path))
        return path

    def write_delay(self, report: DelayReport, fingerprint: str, name: str = "delay.csv") -> Path:
        """Delay table plus `<name>.meta.json` with the field peak and per-row response peaks"""
        rows = [
            (e.e0, e.level, e.tau_mid, e.delay, e.delay_as, e.tau_step, e.error or "")
            for e in report.entries
        ]
        path = write_table(self.path(name), DELAY_COLUMNS, rows, fingerprint)
        save_json({"fingerprint": fingerprint, **report.to_dict()}, sidecar_path(path))
        return path

    def write_eigen(self, states: Sequence[BoundState], fingerprint: str, name: str = "eigen.csv",
                    extra: Optional[Dict[str, Any]] = None) -> Path:
        rows = [(s.ell, s.n_index, s.energy) for s in states]
        path = write_table(self.path(name), EIGEN_COLUMNS, rows, fingerprint)
        save_json({"fingerprint": fingerprint, "state_count": len(states), **(extra or {})}, sidecar_path(path))
        return path

    def write_convergence(self, points: Sequence[ConvergencePoint], fingerprint: str,
                          name: str = "convergence.csv") -> Path:
        rows = [(p.parameter, p.value, p.observable, p.relative_change, p.error or "") for p in points]
        return write_table(self.path(name), CONVERGENCE_COLUMNS, rows, fingerprint)

    def write_record(self, record: Dict[str, Any], name: str = "run.json") -> Path:
        return save_json(record, self.path(name))


def read_scan(path: Path, fallback: Optional[Dict[str, Any]] = None) -> ScanResult:
    """
    Rebuild a ScanResult from a scan CSV

    Kick and pulse parameters come from the sidecar when present, otherwise
    from `fallback` (keys alpha, epsilon, omega, n_cycles).

    Raises:
        StorageError: Malformed CSV or missing pulse parameters
    """
    path = Path(path)
    fingerprint, rows = read_table(path, SCAN_COLUMNS)
    try:
        records = [tuple(float(cell) for cell in row) for row in rows]
    except ValueError as e:
        raise StorageError(f"{path}: non-numeric cell ({e})")
    if not records:
        raise StorageError(f"{path}: no data rows")

    meta_file = sidecar_path(path)
    meta = load_json(meta_file) if meta_file.exists() else dict(fallback or {})
    missing = [key for key in ("alpha", "epsilon", "omega", "n_cycles") if meta.get(key) is None]
    if missing:
        raise StorageError(f"{path}: pulse parameters missing ({', '.join(missing)}); no sidecar or config")

    e0_axis = np.array(sorted({r[0] for r in records}))
    tau_axis = np.array(sorted({r[1] for r in records}))
    e0_index = {value: i for i, value in enumerate(e0_axis)}
    tau_index = {value: j for j, value in enumerate(tau_axis)}
    table = np.full((e0_axis.size, tau_axis.size), np.nan)
    baseline = np.full(e0_axis.size, np.nan)
    for e0, tau, value, base in records:
        table[e0_index[e0], tau_index[tau]] = value
        baseline[e0_index[e0]] = base

    failures = [
        CellFailure(i, j, "missing from table")
        for i in range(e0_axis.size) for j in range(tau_axis.size)
        if not np.isfinite(table[i, j])
    ]
    return ScanResult(
        e0_values=e0_axis,
        tau_values=tau_axis,
        delta_p=table,
        baseline=baseline,
        alpha=float(meta["alpha"]),
        epsilon=float(meta["epsilon"]),
        omega=float(meta["omega"]),
        n_cycles=int(meta["n_cycles"]),
        fingerprint=fingerprint or meta.get("fingerprint", ""),
        source=meta.get("source", "tdse"),
        failures=failures,
        invalid_cells=[(int(c["e0_index"]), c.get("tau_index")) for c in meta.get("invalid_cells", [])],
    )


class DiagnosticsStream:
    """Observer writing (t, norm, bound population) rows during a propagation"""

    def __init__(self, path: Path, fingerprint: str, projector: BoundProjector):
        self.path = Path(path)
        self.projector = projector
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self.path, "w", newline="")
        self._file.write(f"{FINGERPRINT_PREFIX}{fingerprint}\n")
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(DIAGNOSTIC_COLUMNS)

    def __call__(self, t: float, psi: WaveFunction):
        self._writer.writerow([
            format_float(t),
            format_float(psi.norm_squared()),
            format_float(bound_population(psi, self.projector)),
        ])

    def close(self):
        self._file.close()
        logger.info(f"Saved diagnostics to {self.path}")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ScanJournal:
    """
    Append-only JSON-lines record of completed scan work

    The first line is a header carrying the configuration fingerprint and
    the scan axes; every later line is a baseline or cell record with a
    checksum over its other fields. Records of runs that tripped the
    reflection sentinel carry "valid": false and are replayed into
    `flagged`. Only the event loop writes.
    """

    def __init__(self, path: Path, fingerprint: str, e0_values: Sequence[float], tau_values: Sequence[float]):
        self.path = Path(path)
        self.header = {
            "kind": "header",
            "fingerprint": fingerprint,
            "e0_values": [float(v) for v in e0_values],
            "tau_values": [float(v) for v in tau_values],
        }
        self._handle = None
        self.flagged: Set[Tuple[str, int, Optional[int]]] = set()

    def load(self) -> Dict[Tuple[str, int, Optional[int]], float]:
        """Valid records of a journal written for the same configuration and axes"""
        self.flagged = set()
        if not self.path.exists():
            return {}
        with open(self.path) as f:
            lines = [line for line in f if line.strip()]
        if not lines:
            return {}
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError:
            logger.warning(f"Journal {self.path} has an unreadable header, starting over")
            return {}
        if {k: header.get(k) for k in self.header} != self.header:
            logger.warning(f"Journal {self.path} belongs to a different configuration, starting over")
            return {}

        completed = {}
        for number, line in enumerate(lines[1:], start=2):
            try:
                record = json.loads(line)
                if record.get("checksum") != record_checksum(record):
                    raise ValueError("checksum mismatch")
                key = (record["kind"], record["i"], record.get("j"))
                completed[key] = float(record["value"])
                if record.get("valid", True) is False:
                    self.flagged.add(key)
            except (ValueError, KeyError, TypeError) as e:
                logger.warning(f"Discarding journal line {number} of {self.path}: {e}")
        logger.info(f"Replayed {len(completed)} journal records from {self.path}")
        return completed

    def _ends_with_newline(self) -> bool:
        with open(self.path, "rb") as f:
            f.seek(0, 2)
            if f.tell() == 0:
                return True
            f.seek(-1, 2)
            return f.read(1) == b"\n"

    async def open(self, resume: bool):
        """Start appending; a fresh journal (or a mismatched one) is rewritten with a new header"""
        self.path.parent.mkdir(parents=True, exist_ok=True)
        keep = resume and bool(self.load())
        torn = keep and not self._ends_with_newline()
        self._handle = await aiofiles.open(self.path, "a" if keep else "w")
        if torn:
            # a record cut off mid-write; start the next one on its own line
            await self._handle.write("\n")
        if not keep:
            await self._handle.write(json.dumps(self.header) + "\n")
            await self._handle.flush()

    async def append(self, kind: str, i: int, j: Optional[int], value: float, valid: bool = True):
        if self._handle is None:
            raise StorageError("journal is not open")
        record = {"kind": kind, "i": i, "j": j, "value": float(value)}
        if not valid:
            record["valid"] = False
        record["checksum"] = record_checksum(record)
        await self._handle.write(json.dumps(record) + "\n")
        await self._handle.flush()

    async def close(self):
        if self._handle is not None:
            await self._handle.close()
            self._handle = None
