"""
Immutable setup shared by every propagation of one configuration: grid,
potential (with calibrated Yukawa amplitude), bound projector, initial state
and the split-operator propagator.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Optional

from .atom import (
    HALF_STEP_TOLERANCE,
    BoundProjector,
    Potential,
    RadialGrid,
    WaveFunction,
    build_projector,
    calibrate_yukawa,
    ground_state,
    half_step_energy_shift,
    ionization_probability,
)
from .fields import PulseSpec
from .propagator import Observer, PropagationPlan, PropagationResult, SplitOperatorPropagator

if TYPE_CHECKING:
    from ..config.settings import GridConfig, PotentialConfig, ProjectorConfig, PropagationConfig, RunConfig

logger = logging.getLogger("ionization_lab.simulation")


def resolve_potential(grid: RadialGrid, settings: "PotentialConfig") -> Potential:
    """
    Potential described by the settings, calibrating the Yukawa amplitude when requested

    A calibrated amplitude is re-checked on a grid of half the step; a shift of
    the ground energy above HALF_STEP_TOLERANCE is logged as a warning.
    """
    if settings.kind == "yukawa" and settings.calibrate:
        amplitude = calibrate_yukawa(settings.screening, -settings.target_ip, grid)
        potential = settings.to_potential(amplitude)
        calibration_shift(grid, potential)
        return potential
    return settings.to_potential()


@lru_cache(maxsize=8)
def calibration_shift(grid: RadialGrid, potential: Potential) -> float:
    """Ground-energy shift of `potential` between grid step δr and δr/2"""
    shift = half_step_energy_shift(grid, potential)
    if abs(shift) > HALF_STEP_TOLERANCE:
        logger.warning(f"Calibration not converged in dr={grid.step}: ground energy moves {shift:+.3e} at dr/2")
    else:
        logger.info(f"Calibration cross-check at dr/2: ground energy moves {shift:+.3e}")
    return shift


@dataclass(frozen=True)
class SimulationContext:
    grid: RadialGrid
    potential: Potential
    projector: BoundProjector
    initial_state: WaveFunction
    propagator: SplitOperatorPropagator

    @property
    def ground_energy(self) -> float:
        return float(self.projector.energies[0][0])

    @property
    def l_max(self) -> int:
        return self.propagator.l_max

    def plan(self, pulse: PulseSpec, settings: "PropagationConfig") -> PropagationPlan:
        return PropagationPlan.for_pulse(
            self.grid, pulse, settings.dt, self.l_max,
            fine_fraction=settings.fine_fraction,
            norm_tolerance=settings.norm_tolerance,
        )

    def run(self, pulse: PulseSpec, settings: "PropagationConfig", observer: Optional[Observer] = None,
            progress: bool = False) -> PropagationResult:
        return self.propagator.propagate(
            self.initial_state, pulse, self.plan(pulse, settings),
            observer=observer, observe_every=settings.diagnostics_every, progress=progress,
        )

    def probability(self, result: PropagationResult) -> float:
        return ionization_probability(result.wavefunction, self.projector)


@lru_cache(maxsize=8)
def build_context(grid_settings: "GridConfig", potential_settings: "PotentialConfig", l_max: int,
                  projector_settings: "ProjectorConfig") -> SimulationContext:
    """Build (once per process and setting combination) the static simulation setup"""
    grid = grid_settings.to_grid()
    potential = resolve_potential(grid, potential_settings)
    projector = build_projector(grid, potential, projector_settings.l_b, projector_settings.max_n)
    initial = ground_state(projector, l_max)
    propagator = SplitOperatorPropagator(grid, potential, l_max)
    logger.info(
        f"Simulation context: {grid.n_points} points (dr={grid.step}), L_max={l_max}, "
        f"{potential.describe()}, E_ground={projector.energies[0][0]:.10f}"
    )
    return SimulationContext(grid, potential, projector, initial, propagator)


def context_for(config: "RunConfig") -> SimulationContext:
    return build_context(config.grid, config.potential, config.propagation.l_max, config.projector)
