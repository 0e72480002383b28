"""
Scan farm: δP over an (E₀, τ) grid as independent jobs on a worker pool.

Baselines run first (one job per E₀), then every kick cell. Results are
merged by index, so the table does not depend on completion order. A
journal of finished jobs lets an interrupted scan resume.
"""

import asyncio
import logging
import time
from collections import OrderedDict
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from tqdm import tqdm

from ..config.settings import RunConfig
from ..core.simulation import context_for
from ..models import CellFailure, ScanResult
from ..storage import ScanJournal
from .rates import FirstVariation, tau_axis

logger = logging.getLogger("ionization_lab.scan")

# One FirstVariation per configuration and process, so baselines are reused across cells
MAX_CACHED_VARIATIONS = 8
_variations: "OrderedDict[str, FirstVariation]" = OrderedDict()


def _variation_for(config: RunConfig) -> FirstVariation:
    key = config.fingerprint
    if key in _variations:
        _variations.move_to_end(key)
        return _variations[key]
    variation = FirstVariation(context_for(config), config)
    _variations[key] = variation
    while len(_variations) > MAX_CACHED_VARIATIONS:
        _variations.popitem(last=False)
    return variation


def compute_baseline(config: RunConfig, e0: float) -> Tuple[float, bool]:
    """P[E_f] on the unkicked time grid and whether the run stayed clear of the box edge"""
    variation = _variation_for(config)
    value = variation.baseline(e0)
    return value, variation.baseline_valid(e0)


def compute_cell(config: RunConfig, e0: float, tau: float, baseline: Optional[float],
                 baseline_valid: bool = True) -> Tuple[float, bool]:
    """δP for one cell, reusing the baseline of its row when the time grids agree"""
    variation = _variation_for(config)
    if baseline is not None:
        variation.seed_baseline(e0, baseline, baseline_valid)
    value = variation.delta_p(e0, tau)
    return value, variation.last_valid


def scan_axes(config: RunConfig) -> Tuple[np.ndarray, np.ndarray]:
    """E₀ and τ axes of a configuration: explicit τ values, or a window around the field peak"""
    e0_values = np.asarray(config.scan.e0_values, dtype=float)
    if config.scan.tau_values is not None:
        return e0_values, np.asarray(config.scan.tau_values, dtype=float)
    pulse = config.pulse.to_pulse()
    return e0_values, tau_axis(pulse, config.scan.tau_count, config.scan.tau_half_width)


class ScanService:
    """
    Runs a δP scan with a bounded number of concurrent jobs

    CPU work goes to a process pool (a single worker thread when
    workers == 1). Per-cell errors are captured with their (E₀, τ) index
    and the scan carries on with the remaining cells.
    """

    def __init__(self, config: RunConfig, workers: Optional[int] = None,
                 journal: Optional[ScanJournal] = None, resume: bool = False, progress: bool = False):
        self.config = config
        self.workers = workers or config.run.workers
        self.journal = journal
        self.resume = resume
        self.progress = progress
        self._journal_lock: Optional[asyncio.Lock] = None

        self.stats = {
            "total_jobs": 0,
            "completed_jobs": 0,
            "failed_jobs": 0,
            "resumed_jobs": 0,
            "flagged_jobs": 0,
            "workers": self.workers,
            "elapsed_seconds": 0.0,
        }
        logger.info(f"Initialized ScanService with {self.workers} worker(s)")

    def _executor(self) -> Executor:
        if self.workers > 1:
            return ProcessPoolExecutor(max_workers=self.workers)
        return ThreadPoolExecutor(max_workers=1)

    async def _record(self, kind: str, i: int, j: Optional[int], value: float, valid: bool):
        if self.journal is not None:
            async with self._journal_lock:
                await self.journal.append(kind, i, j, value, valid)

    async def _job(self, executor: Executor, semaphore: asyncio.Semaphore, bar: tqdm,
                   kind: str, i: int, j: Optional[int], fn, *args) -> Tuple[int, Optional[int], Any, bool, Optional[str]]:
        loop = asyncio.get_running_loop()
        async with semaphore:
            try:
                value, valid = await loop.run_in_executor(executor, fn, *args)
            except Exception as e:
                location = f"E0 index {i}" if j is None else f"cell ({i}, {j})"
                logger.error(f"Error computing {kind} for {location}: {e}")
                self.stats["failed_jobs"] += 1
                bar.update(1)
                return i, j, None, True, str(e)
        await self._record(kind, i, j, value, valid)
        if not valid:
            self.stats["flagged_jobs"] += 1
        self.stats["completed_jobs"] += 1
        bar.update(1)
        return i, j, value, valid, None

    async def run(self, e0_values: Optional[Sequence[float]] = None,
                  tau_values: Optional[Sequence[float]] = None) -> ScanResult:
        """
        Fill the δP table for the given axes (defaults come from the configuration)

        Returns:
            ScanResult: Failed cells hold NaN and are listed in `failures`;
                runs flagged by the reflection sentinel are listed in `invalid_cells`
        """
        started = time.perf_counter()
        if e0_values is None or tau_values is None:
            default_e0, default_tau = scan_axes(self.config)
            e0_values = default_e0 if e0_values is None else e0_values
            tau_values = default_tau if tau_values is None else tau_values
        e0_axis = np.asarray(e0_values, dtype=float)
        tau_axis_values = np.asarray(tau_values, dtype=float)
        if e0_axis.size == 0 or tau_axis_values.size == 0:
            raise ValueError("scan axes must be non-empty")
        for name, axis in (("E0", e0_axis), ("tau", tau_axis_values)):
            if np.any(np.diff(axis) <= 0):
                raise ValueError(f"{name} axis must be strictly ascending")

        n_e0, n_tau = e0_axis.size, tau_axis_values.size
        baseline = np.full(n_e0, np.nan)
        table = np.full((n_e0, n_tau), np.nan)
        failures: List[CellFailure] = []
        flagged: Set[Tuple[int, Optional[int]]] = set()
        self.stats["total_jobs"] = n_e0 + n_e0 * n_tau

        completed: Dict[Tuple[str, int, Optional[int]], float] = {}
        if self.journal is not None:
            if self.resume:
                completed = self.journal.load()
                flagged = {(i, j) for _, i, j in self.journal.flagged}
            await self.journal.open(self.resume)

        semaphore = asyncio.Semaphore(self.workers)
        self._journal_lock = asyncio.Lock()
        try:
            with self._executor() as executor, tqdm(
                total=self.stats["total_jobs"], desc="Scan", unit="job", disable=not self.progress
            ) as bar:
                baseline_jobs = []
                for i, e0 in enumerate(e0_axis):
                    if ("baseline", i, None) in completed:
                        baseline[i] = completed[("baseline", i, None)]
                        self.stats["resumed_jobs"] += 1
                        bar.update(1)
                        continue
                    baseline_jobs.append(self._job(
                        executor, semaphore, bar, "baseline", i, None,
                        compute_baseline, self.config, float(e0),
                    ))
                for i, _, value, valid, error in await asyncio.gather(*baseline_jobs):
                    if error is None:
                        baseline[i] = value
                        if not valid:
                            flagged.add((i, None))
                    else:
                        failures.append(CellFailure(i, None, error))

                cell_jobs = []
                for i, e0 in enumerate(e0_axis):
                    for j, tau in enumerate(tau_axis_values):
                        if ("cell", i, j) in completed:
                            table[i, j] = completed[("cell", i, j)]
                            self.stats["resumed_jobs"] += 1
                            bar.update(1)
                            continue
                        if not np.isfinite(baseline[i]):
                            failures.append(CellFailure(i, j, "baseline failed for this E0"))
                            self.stats["failed_jobs"] += 1
                            bar.update(1)
                            continue
                        cell_jobs.append(self._job(
                            executor, semaphore, bar, "cell", i, j,
                            compute_cell, self.config, float(e0), float(tau), float(baseline[i]),
                            (i, None) not in flagged,
                        ))
                for i, j, value, valid, error in await asyncio.gather(*cell_jobs):
                    if error is None:
                        table[i, j] = value
                        if not valid:
                            flagged.add((i, j))
                    else:
                        failures.append(CellFailure(i, j, error))
        finally:
            if self.journal is not None:
                await self.journal.close()

        failures.sort(key=lambda f: (f.e0_index, -1 if f.tau_index is None else f.tau_index))
        self.stats["elapsed_seconds"] = time.perf_counter() - started
        logger.info(
            f"Scan finished: {int(np.count_nonzero(np.isfinite(table)))}/{n_e0 * n_tau} cells, "
            f"{len(failures)} failure(s), {len(flagged)} flagged, {self.stats['resumed_jobs']} resumed"
        )
        return ScanResult(
            e0_values=e0_axis,
            tau_values=tau_axis_values,
            delta_p=table,
            baseline=baseline,
            alpha=self.config.signal.alpha,
            epsilon=self.config.signal.epsilon,
            omega=self.config.pulse.omega,
            n_cycles=self.config.pulse.n_cycles,
            fingerprint=self.config.fingerprint,
            source="tdse",
            failures=failures,
            invalid_cells=sorted(flagged, key=lambda c: (c[0], -1 if c[1] is None else c[1])),
        )

    def get_stats(self) -> Dict[str, Any]:
        """Get scan statistics"""
        stats = self.stats.copy()
        total = stats["total_jobs"]
        stats["success_rate"] = (stats["completed_jobs"] + stats["resumed_jobs"]) / total if total else 0.0
        return stats


def scan(config: RunConfig, e0_values: Optional[Sequence[float]] = None,
         tau_values: Optional[Sequence[float]] = None, workers: Optional[int] = None,
         journal: Optional[ScanJournal] = None, resume: bool = False, progress: bool = False) -> ScanResult:
    """Synchronous entry point around ScanService.run"""
    service = ScanService(config, workers=workers, journal=journal, resume=resume, progress=progress)
    return asyncio.run(service.run(e0_values, tau_values))
