"""
Split-operator propagation of the length-gauge TDSE on the (ℓ, r) grid.

One step is a Strang splitting: a Cayley half-step of the field-free channel
Hamiltonians, a full step of the interaction E·r·cosθ applied in the basis
that diagonalizes the ℓ-coupling matrix, and a second Cayley half-step.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from tqdm import tqdm

from ..utils import DomainError, GridMismatchError, PropagationUnstableError
from .atom import Potential, RadialGrid, WaveFunction, radial_hamiltonian
from .fields import KICK_WINDOW_WIDTHS, PulseSpec, total_field

logger = logging.getLogger("ionization_lab.propagator")

# Fraction of the radial box treated as the reflection-sentinel region
BOUNDARY_FRACTION = 0.1
BOUNDARY_THRESHOLD = 1e-6
# Steps between norm checks
NORM_CHECK_STRIDE = 200
# Largest kick-window step as a fraction of the kick width ε
MAX_FINE_FRACTION = 0.1
# LU factorizations kept per propagator; a refined plan needs two
MAX_CACHED_FACTORS = 4

Observer = Callable[[float, WaveFunction], None]


def coupling_coefficient(ell: int) -> float:
    """⟨ℓ+1, 0|cosθ|ℓ, 0⟩ = (ℓ+1)/√((2ℓ+1)(2ℓ+3))"""
    return (ell + 1) / math.sqrt((2 * ell + 1) * (2 * ell + 3))


@dataclass(frozen=True)
class TimeSegment:
    """Interval [start, stop] tiled with n_steps equal steps"""
    start: float
    stop: float
    n_steps: int

    @property
    def step(self) -> float:
        return (self.stop - self.start) / self.n_steps

    def times(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.n_steps)


def _tile(start: float, stop: float, max_step: float) -> Optional[TimeSegment]:
    length = stop - start
    if length <= 0:
        return None
    n_steps = max(1, math.ceil(length / max_step - 1e-9))
    return TimeSegment(start, stop, n_steps)


@dataclass(frozen=True)
class PropagationPlan:
    """
    Time-stepping parameters of one propagation

    dt_fine is used inside (τ - 8ε, τ + 8ε) when the pulse carries a kick and
    dt_fine < dt; otherwise the whole pulse is tiled uniformly with dt.
    """
    grid: RadialGrid
    dt: float
    l_max: int
    dt_fine: Optional[float] = None
    norm_tolerance: float = 1e-6

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.l_max < 1:
            raise DomainError(f"l_max must be at least 1, got {self.l_max}")
        if self.dt_fine is not None and not self.dt_fine > 0:
            raise DomainError(f"dt_fine must be positive, got {self.dt_fine}")

    @classmethod
    def for_pulse(cls, grid: RadialGrid, p: PulseSpec, dt: float, l_max: int,
                  fine_fraction: float = 0.1, norm_tolerance: float = 1e-6) -> "PropagationPlan":
        """Plan obeying dt_fine = min(dt, fine_fraction·ε) for the pulse's kick"""
        if not 0 < fine_fraction <= MAX_FINE_FRACTION:
            raise DomainError(f"fine_fraction must lie in (0, {MAX_FINE_FRACTION}], got {fine_fraction}")
        dt_fine = None
        if p.signal is not None:
            dt_fine = min(dt, fine_fraction * p.signal.epsilon)
        return cls(grid=grid, dt=dt, l_max=l_max, dt_fine=dt_fine, norm_tolerance=norm_tolerance)

    def refines(self, p: PulseSpec) -> bool:
        return p.signal is not None and self.dt_fine is not None and self.dt_fine < self.dt

    def segments(self, p: PulseSpec) -> List[TimeSegment]:
        if not self.refines(p):
            return [_tile(0.0, p.duration, self.dt)]
        kick = p.signal
        lower = max(0.0, kick.tau - KICK_WINDOW_WIDTHS * kick.epsilon)
        upper = min(p.duration, kick.tau + KICK_WINDOW_WIDTHS * kick.epsilon)
        tiles = [
            _tile(0.0, lower, self.dt),
            _tile(lower, upper, self.dt_fine),
            _tile(upper, p.duration, self.dt),
        ]
        return [segment for segment in tiles if segment is not None]

    def signature(self, p: PulseSpec) -> Tuple[Tuple[float, float, int], ...]:
        """Hashable identity of the time grid; equal signatures give identical step sequences"""
        return tuple((s.start, s.stop, s.n_steps) for s in self.segments(p))

    def total_steps(self, p: PulseSpec) -> int:
        return sum(segment.n_steps for segment in self.segments(p))

    def kick_step(self, p: PulseSpec) -> Optional[float]:
        """Step length used across the kick window, None for an unkicked pulse"""
        if p.signal is None:
            return None
        return self.dt_fine if self.refines(p) else self.dt

    def check(self, p: PulseSpec):
        """Raise DomainError when the kick is resolved more coarsely than ε/10"""
        step = self.kick_step(p)
        if step is None:
            return
        limit = MAX_FINE_FRACTION * p.signal.epsilon
        if step > limit * (1.0 + 1e-9):
            raise DomainError(f"kick-window step {step:.3e} exceeds {MAX_FINE_FRACTION}·ε = {limit:.3e}")


@dataclass
class PropagationResult:
    """Final state of a propagation plus run diagnostics"""
    wavefunction: WaveFunction
    final_norm: float
    norm_drift: float
    boundary_population: float
    valid: bool
    n_steps: int
    wall_time: float

    def to_dict(self):
        return {
            "final_norm": self.final_norm,
            "norm_drift": self.norm_drift,
            "boundary_population": self.boundary_population,
            "valid": self.valid,
            "n_steps": self.n_steps,
            "wall_time": self.wall_time,
        }


class SplitOperatorPropagator:
    """
    Strang-split propagator for a fixed grid, potential and L_max

    Field-free half-steps solve (1 + iH·dt/4)ψ' = (1 - iH·dt/4)ψ for every
    channel at once through a block-diagonal sparse LU factorization, cached
    per step size. The interaction step uses a one-time diagonalization of
    the ℓ-coupling matrix. Matrix products go through numpy.einsum without
    BLAS so results do not depend on thread scheduling.
    """

    def __init__(self, grid: RadialGrid, potential: Potential, l_max: int):
        if l_max < 1:
            raise DomainError(f"l_max must be at least 1, got {l_max}")
        self.grid = grid
        self.potential = potential
        self.l_max = l_max
        self._r = grid.r

        n = grid.n_points
        diagonals = []
        off_diagonals = []
        for ell in range(l_max + 1):
            hamiltonian = radial_hamiltonian(grid, potential, ell)
            diagonals.append(hamiltonian.diagonal)
            off_diagonals.append(np.append(hamiltonian.off_diagonal, 0.0))
        self._diag = np.concatenate(diagonals)
        # block-boundary entries are zero, so channels stay decoupled
        self._off = np.concatenate(off_diagonals)[:-1]
        self._shape = (l_max + 1, n)
        self._factors: Dict[float, object] = {}

        coupling = np.zeros((l_max + 1, l_max + 1))
        for ell in range(l_max):
            coupling[ell, ell + 1] = coupling[ell + 1, ell] = coupling_coefficient(ell)
        self.coupling_eigenvalues, self.coupling_vectors = np.linalg.eigh(coupling)

        logger.debug(f"Propagator ready: {n} radial points, L_max={l_max}, {potential.describe()}")

    def _apply_hamiltonian(self, flat: np.ndarray) -> np.ndarray:
        result = self._diag * flat
        result[:-1] += self._off * flat[1:]
        result[1:] += self._off * flat[:-1]
        return result

    def _factor(self, dt: float):
        factor = self._factors.get(dt)
        if factor is None:
            shift = 0.25j * dt
            matrix = sp.diags(
                [shift * self._off, 1.0 + shift * self._diag, shift * self._off],
                [-1, 0, 1],
                format="csc",
                dtype=complex,
            )
            factor = splu(matrix, permc_spec="NATURAL")
            while len(self._factors) >= MAX_CACHED_FACTORS:
                # dicts keep insertion order
                del self._factors[next(iter(self._factors))]
            self._factors[dt] = factor
        return factor

    def _half_free(self, coefficients: np.ndarray, dt: float) -> np.ndarray:
        flat = coefficients.reshape(-1)
        rhs = flat - 0.25j * dt * self._apply_hamiltonian(flat)
        return self._factor(dt).solve(rhs).reshape(self._shape)

    def _interaction(self, coefficients: np.ndarray, dt: float, field: float) -> np.ndarray:
        if field == 0.0:
            return coefficients
        vectors = self.coupling_vectors
        rotated = np.einsum("lj,lk->jk", vectors, coefficients, optimize=False)
        phases = np.exp(np.multiply.outer(self.coupling_eigenvalues, self._r) * (-1j * field * dt))
        return np.einsum("lj,jk->lk", vectors, rotated * phases, optimize=False)

    def _step_array(self, coefficients: np.ndarray, dt: float, field: float) -> np.ndarray:
        coefficients = self._half_free(coefficients, dt)
        coefficients = self._interaction(coefficients, dt, field)
        return self._half_free(coefficients, dt)

    def _check(self, psi: WaveFunction):
        if psi.grid != self.grid:
            raise GridMismatchError(f"wavefunction grid {psi.grid} differs from propagator grid {self.grid}")
        if psi.l_max != self.l_max:
            raise DomainError(f"wavefunction has L_max={psi.l_max}, propagator expects {self.l_max}")

    def step(self, psi: WaveFunction, t: float, dt: float, field: float) -> WaveFunction:
        """
        Advance ψ from t to t + dt under a constant field value

        Args:
            psi: State at time t
            t: Start time (a.u.); the field is already sampled by the caller
            dt: Step length (a.u.)
            field: Field strength for this step (a.u.)

        Returns:
            WaveFunction: State at t + dt
        """
        if not math.isfinite(field):
            raise DomainError(f"non-finite field {field} at t={t}")
        self._check(psi)
        return WaveFunction(self.grid, self._step_array(psi.coefficients, dt, field))

    def boundary_population(self, psi: WaveFunction) -> float:
        mask = self._r > (1.0 - BOUNDARY_FRACTION) * self.grid.extent
        return float(self.grid.step * np.sum(np.abs(psi.coefficients[:, mask]) ** 2))

    def propagate(self, psi0: WaveFunction, p: PulseSpec, plan: PropagationPlan,
                  observer: Optional[Observer] = None, observe_every: int = 0,
                  progress: bool = False, grid_pulse: Optional[PulseSpec] = None) -> PropagationResult:
        """
        Propagate ψ₀ over (0, T₁) under fundamental plus signal field

        The field of each step is sampled at its midpoint. The norm is
        checked periodically; drift above plan.norm_tolerance raises
        PropagationUnstableError. Population reaching the outer part of the
        box marks the result invalid without raising. The time grid is tiled
        for `grid_pulse` when given, so an unkicked run can share the step
        sequence of a kicked one. Factorizations for step sizes the plan does
        not use are released first.
        """
        self._check(psi0)
        if plan.grid != self.grid or plan.l_max != self.l_max:
            raise DomainError("propagation plan does not match the propagator grid or L_max")
        plan.check(p)

        started = time.perf_counter()
        initial_norm = psi0.norm_squared()
        coefficients = psi0.coefficients.copy()
        segments = plan.segments(grid_pulse if grid_pulse is not None else p)
        steps = {segment.step for segment in segments}
        for stale in [dt for dt in self._factors if dt not in steps]:
            del self._factors[stale]
        total = sum(segment.n_steps for segment in segments)
        boundary_peak = 0.0
        done = 0

        with tqdm(total=total, desc="Propagating", unit="step", disable=not progress, leave=False) as bar:
            for segment in segments:
                h = segment.step
                midpoints = segment.times() + 0.5 * h
                fields = np.asarray(total_field(midpoints, p), dtype=float)
                for k in range(segment.n_steps):
                    coefficients = self._step_array(coefficients, h, float(fields[k]))
                    done += 1
                    t_now = segment.start + (k + 1) * h

                    if done % NORM_CHECK_STRIDE == 0 or done == total:
                        state = WaveFunction(self.grid, coefficients)
                        drift = abs(state.norm_squared() - initial_norm)
                        if not drift <= plan.norm_tolerance:
                            logger.error(f"Norm drift {drift:.3e} at t={t_now:.4f} exceeds {plan.norm_tolerance}")
                            raise PropagationUnstableError(drift, t_now)
                        boundary_peak = max(boundary_peak, self.boundary_population(state))
                        bar.update(NORM_CHECK_STRIDE if done % NORM_CHECK_STRIDE == 0 else total % NORM_CHECK_STRIDE)

                    if observer is not None and observe_every > 0 and done % observe_every == 0:
                        observer(t_now, WaveFunction(self.grid, coefficients))

        final = WaveFunction(self.grid, coefficients)
        final_norm = final.norm_squared()
        valid = boundary_peak < BOUNDARY_THRESHOLD * max(final_norm, 1e-300)
        if not valid:
            logger.warning(
                f"Reflection sentinel tripped: population {boundary_peak:.3e} in the outer "
                f"{BOUNDARY_FRACTION:.0%} of the box (R_max={self.grid.extent})"
            )
        wall_time = time.perf_counter() - started
        logger.debug(f"Propagated {total} steps in {wall_time:.2f}s, norm={final_norm:.15f}")
        return PropagationResult(
            wavefunction=final,
            final_norm=final_norm,
            norm_drift=abs(final_norm - initial_norm),
            boundary_population=boundary_peak,
            valid=valid,
            n_steps=total,
            wall_time=wall_time,
        )
