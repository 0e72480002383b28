"""
Data models for scan, delay, single-run and convergence results.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np


@dataclass
class CellFailure:
    """A scan cell (or baseline) that raised instead of producing a value"""
    e0_index: int
    tau_index: Optional[int]  # None for a failed baseline
    message: str

    def to_dict(self):
        return {"e0_index": self.e0_index, "tau_index": self.tau_index, "message": self.message}


@dataclass
class ScanResult:
    """
    δP table over (E₀, τ) with rows indexed by E₀ and columns by τ

    Cells that failed hold NaN and are listed in `failures`; every other
    entry is finite. `invalid_cells` lists the (E₀ index, τ index) of runs
    flagged by the reflection sentinel, with τ index None for a baseline.
    """
    e0_values: np.ndarray
    tau_values: np.ndarray
    delta_p: np.ndarray
    baseline: np.ndarray
    alpha: float
    epsilon: float
    omega: float
    n_cycles: int
    fingerprint: str
    source: str = "tdse"
    failures: List[CellFailure] = field(default_factory=list)
    invalid_cells: List[Tuple[int, Optional[int]]] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.e0_values = np.asarray(self.e0_values, dtype=float)
        self.tau_values = np.asarray(self.tau_values, dtype=float)
        self.delta_p = np.asarray(self.delta_p, dtype=float)
        self.baseline = np.asarray(self.baseline, dtype=float)
        expected = (self.e0_values.size, self.tau_values.size)
        if self.delta_p.shape != expected:
            raise ValueError(f"table shape {self.delta_p.shape} does not match axes {expected}")
        if self.baseline.shape != (self.e0_values.size,):
            raise ValueError(f"baseline length {self.baseline.size} does not match {self.e0_values.size} E0 values")

    @property
    def shape(self):
        return self.delta_p.shape

    @property
    def tau_step(self) -> float:
        """Largest spacing of the τ axis; zero for a single column"""
        if self.tau_values.size < 2:
            return 0.0
        return float(np.max(np.diff(self.tau_values)))

    def succeeded(self) -> int:
        return int(np.count_nonzero(np.isfinite(self.delta_p)))

    def derivative_estimates(self) -> np.ndarray:
        """δP normalized by the kick area α·√π"""
        return self.delta_p / (self.alpha * np.sqrt(np.pi))

    def to_dict(self):
        """Metadata view; the table itself goes to CSV"""
        return {
            "source": self.source,
            "fingerprint": self.fingerprint,
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "kick_area": self.alpha * float(np.sqrt(np.pi)),
            "omega": self.omega,
            "n_cycles": self.n_cycles,
            "e0_values": self.e0_values.tolist(),
            "tau_values": self.tau_values.tolist(),
            "baseline": [None if not np.isfinite(b) else float(b) for b in self.baseline],
            "failures": [f.to_dict() for f in self.failures],
            "invalid_cells": [{"e0_index": i, "tau_index": j} for i, j in self.invalid_cells],
            "normalization": "derivative estimate = deltaP / (alpha * sqrt(pi))",
            **self.metadata,
        }


@dataclass
class DelayEntry:
    """Contour-midpoint delay of one E₀ row at one relative level"""
    e0: float
    level: float
    tau_mid: Optional[float]
    delay: Optional[float]
    delay_as: Optional[float]
    tau_step: float
    error: Optional[str] = None

    def to_dict(self):
        return {
            "e0": self.e0,
            "level": self.level,
            "tau_mid": self.tau_mid,
            "delay": self.delay,
            "delay_as": self.delay_as,
            "tau_step": self.tau_step,
            "error": self.error,
        }


@dataclass
class DelayReport:
    """Per-E₀ peak times and contour-midpoint delays relative to the field maximum"""
    field_peak_time: float
    tau_step: float
    entries: List[DelayEntry] = field(default_factory=list)
    peak_times: Dict[float, Optional[float]] = field(default_factory=dict)

    def delays(self) -> List[float]:
        return [e.delay for e in self.entries if e.delay is not None]

    def errors(self) -> List[DelayEntry]:
        return [e for e in self.entries if e.error is not None]

    def max_abs_delay(self) -> float:
        values = self.delays()
        return max(abs(v) for v in values) if values else float("nan")

    def to_dict(self):
        return {
            "field_peak_time": self.field_peak_time,
            "tau_step": self.tau_step,
            "peak_times": [{"e0": e0, "tau_peak": tau} for e0, tau in sorted(self.peak_times.items())],
        }


@dataclass
class RunRecord:
    """Outcome of a single propagation (cmd_propagate)"""
    probability: float
    final_norm: float
    bound_population: float
    boundary_population: float
    valid: bool
    n_steps: int
    wall_time: float
    fingerprint: str
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self):
        return {
            "probability": self.probability,
            "final_norm": self.final_norm,
            "bound_population": self.bound_population,
            "boundary_population": self.boundary_population,
            "valid": self.valid,
            "n_steps": self.n_steps,
            "wall_time": self.wall_time,
            "fingerprint": self.fingerprint,
            **self.metadata,
        }


@dataclass
class ConvergencePoint:
    """Observable at one value of the studied parameter"""
    parameter: str
    value: float
    observable: Optional[float]
    relative_change: Optional[float] = None
    error: Optional[str] = None

    def to_dict(self):
        return {
            "parameter": self.parameter,
            "value": self.value,
            "observable": self.observable,
            "relative_change": self.relative_change,
            "error": self.error,
        }
