"""
One-electron atom on a uniform radial grid.

Radial grids, the Coulomb and Yukawa binding potentials, the finite-difference
radial Hamiltonian per angular channel, field-free bound states, the
bound-state projector and the ionization probability ‖(1 - Q)ψ‖².

Wavefunctions are reduced radial functions u_ℓ(r) = r·R_ℓ(r) stored as a
(L_max + 1, n_points) complex array; the grid inner product is
⟨u|v⟩ = δr·Σ conj(u)·v.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import bisect

from ..utils import CalibrationError, DomainError, GridMismatchError

logger = logging.getLogger("ionization_lab.atom")

# Default Yukawa calibration bracket for the amplitude A
CALIBRATION_BRACKET = (0.5, 10.0)
# Ground-energy shift under a halved step above which a calibration is reported as unconverged
HALF_STEP_TOLERANCE = 1e-3


@dataclass(frozen=True)
class RadialGrid:
    """Uniform mesh r_k = (k + 1)·δr, k = 0..n_points-1; u vanishes at r = 0 and one step past the last node"""
    step: float
    n_points: int

    def __post_init__(self):
        if not self.step > 0:
            raise DomainError(f"grid step must be positive, got {self.step}")
        if self.n_points < 10:
            raise DomainError(f"grid needs at least 10 points, got {self.n_points}")

    @classmethod
    def from_extent(cls, step: float, r_max: float) -> "RadialGrid":
        return cls(step=step, n_points=int(round(r_max / step)))

    @property
    def extent(self) -> float:
        return self.n_points * self.step

    @property
    def r(self) -> np.ndarray:
        return self.step * np.arange(1, self.n_points + 1, dtype=float)


class PotentialKind(Enum):
    """Supported binding potentials"""
    COULOMB = "coulomb"
    YUKAWA = "yukawa"


@dataclass(frozen=True)
class Potential:
    """Coulomb -1/r or Yukawa -A·exp(-r/a)/r"""
    kind: PotentialKind = PotentialKind.COULOMB
    amplitude: float = 1.0
    screening: Optional[float] = None

    def __post_init__(self):
        if self.kind is PotentialKind.YUKAWA:
            if not self.amplitude > 0:
                raise DomainError(f"Yukawa amplitude must be positive, got {self.amplitude}")
            if self.screening is None or not self.screening > 0:
                raise DomainError(f"Yukawa screening length must be positive, got {self.screening}")

    @classmethod
    def coulomb(cls) -> "Potential":
        return cls(PotentialKind.COULOMB)

    @classmethod
    def yukawa(cls, amplitude: float, screening: float) -> "Potential":
        return cls(PotentialKind.YUKAWA, amplitude=amplitude, screening=screening)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        if self.kind is PotentialKind.COULOMB:
            return -1.0 / r
        return -self.amplitude * np.exp(-r / self.screening) / r

    def describe(self) -> str:
        if self.kind is PotentialKind.COULOMB:
            return "coulomb"
        return f"yukawa(A={self.amplitude:.12g}, a={self.screening:.12g})"


@dataclass(frozen=True)
class TridiagonalOperator:
    """Symmetric tridiagonal matrix stored as its diagonal and first off-diagonal"""
    diagonal: np.ndarray
    off_diagonal: np.ndarray

    @property
    def size(self) -> int:
        return self.diagonal.size

    def matvec(self, vector: np.ndarray) -> np.ndarray:
        result = self.diagonal * vector
        result[:-1] += self.off_diagonal * vector[1:]
        result[1:] += self.off_diagonal * vector[:-1]
        return result

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diagonal) + np.diag(self.off_diagonal, 1) + np.diag(self.off_diagonal, -1)


@dataclass(frozen=True)
class BoundState:
    """Field-free eigenpair of one angular channel"""
    ell: int
    n_index: int
    energy: float
    vector: np.ndarray = field(repr=False)

    @property
    def principal_n(self) -> int:
        return self.ell + self.n_index + 1


@dataclass
class WaveFunction:
    """Reduced radial coefficients c[ℓ, k] for ℓ = 0..L_max with m = 0"""
    grid: RadialGrid
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex)
        if self.coefficients.ndim != 2 or self.coefficients.shape[1] != self.grid.n_points:
            raise DomainError(
                f"coefficients of shape {self.coefficients.shape} do not match "
                f"{self.grid.n_points} grid points"
            )

    @classmethod
    def zeros(cls, grid: RadialGrid, l_max: int) -> "WaveFunction":
        return cls(grid, np.zeros((l_max + 1, grid.n_points), dtype=complex))

    @classmethod
    def from_radial(cls, grid: RadialGrid, vector: np.ndarray, ell: int, l_max: int) -> "WaveFunction":
        """Place a single radial function in channel ℓ of an otherwise empty wavefunction"""
        if ell > l_max:
            raise DomainError(f"channel {ell} exceeds l_max={l_max}")
        psi = cls.zeros(grid, l_max)
        psi.coefficients[ell] = vector
        return psi

    @property
    def l_max(self) -> int:
        return self.coefficients.shape[0] - 1

    def copy(self) -> "WaveFunction":
        return WaveFunction(self.grid, self.coefficients.copy())

    def channel_populations(self) -> np.ndarray:
        return self.grid.step * np.sum(np.abs(self.coefficients) ** 2, axis=1)

    def norm_squared(self) -> float:
        return float(self.grid.step * np.sum(np.abs(self.coefficients) ** 2))

    def norm(self) -> float:
        return math.sqrt(self.norm_squared())

    def inner(self, other: "WaveFunction") -> complex:
        _require_same_grid(self.grid, other.grid)
        n_channels = min(self.coefficients.shape[0], other.coefficients.shape[0])
        return complex(self.grid.step * np.sum(
            np.conj(self.coefficients[:n_channels]) * other.coefficients[:n_channels]
        ))

    def __sub__(self, other: "WaveFunction") -> "WaveFunction":
        _require_same_grid(self.grid, other.grid)
        return WaveFunction(self.grid, self.coefficients - other.coefficients)


def _require_same_grid(a: RadialGrid, b: RadialGrid):
    if a != b:
        raise GridMismatchError(f"grid mismatch: {a} vs {b}")


def radial_hamiltonian(grid: RadialGrid, pot: Potential, ell: int) -> TridiagonalOperator:
    """
    Three-point reduced radial Hamiltonian -½d²/dr² + ℓ(ℓ+1)/(2r²) + V(r)

    Args:
        grid: Radial grid (Dirichlet at r = 0 and beyond the last node)
        pot: Binding potential
        ell: Angular momentum channel

    Returns:
        TridiagonalOperator: diagonal 1/δr² + ℓ(ℓ+1)/(2r²) + V(r), off-diagonal -1/(2δr²)
    """
    if ell < 0:
        raise DomainError(f"ell must be non-negative, got {ell}")
    r = grid.r
    inv_h2 = 1.0 / grid.step ** 2
    diagonal = inv_h2 + ell * (ell + 1) / (2.0 * r ** 2) + pot(r)
    off_diagonal = np.full(grid.n_points - 1, -0.5 * inv_h2)
    return TridiagonalOperator(diagonal, off_diagonal)


def _fix_sign(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column positive"""
    peaks = vectors[np.argmax(np.abs(vectors), axis=0), np.arange(vectors.shape[1])]
    return vectors * np.where(peaks < 0, -1.0, 1.0)


def lowest_eigenpairs(grid: RadialGrid, pot: Potential, ell: int, count: int):
    """Lowest `count` eigenpairs (any sign), eigenvectors grid-normalized"""
    hamiltonian = radial_hamiltonian(grid, pot, ell)
    count = min(count, grid.n_points)
    energies, vectors = eigh_tridiagonal(
        hamiltonian.diagonal, hamiltonian.off_diagonal,
        select="i", select_range=(0, count - 1),
    )
    vectors = _fix_sign(vectors) / math.sqrt(grid.step)
    return energies, vectors


def ground_state_energy(grid: RadialGrid, pot: Potential) -> float:
    """Lowest ℓ = 0 eigenvalue, bound or not"""
    hamiltonian = radial_hamiltonian(grid, pot, 0)
    energies = eigh_tridiagonal(
        hamiltonian.diagonal, hamiltonian.off_diagonal,
        eigvals_only=True, select="i", select_range=(0, 0),
    )
    return float(energies[0])


def bound_states(grid: RadialGrid, pot: Potential, ell: int, max_count: int) -> List[BoundState]:
    """
    Lowest negative-energy eigenpairs of one channel, energies ascending

    Returns fewer than max_count states (possibly none) when the box supports
    fewer bound states.
    """
    if max_count < 1:
        raise DomainError(f"max_count must be at least 1, got {max_count}")
    energies, vectors = lowest_eigenpairs(grid, pot, ell, max_count)
    return [
        BoundState(ell=ell, n_index=i, energy=float(energies[i]), vector=vectors[:, i].copy())
        for i in range(energies.size)
        if energies[i] < 0.0
    ]


def calibrate_yukawa(screening: float, target: float, grid: RadialGrid,
                     bracket=CALIBRATION_BRACKET, xtol: float = 1e-10) -> float:
    """
    Yukawa amplitude A whose ℓ = 0 ground-state energy equals `target`

    The ground-state energy decreases monotonically with A, so the root is
    found by bisection inside `bracket`.
    """
    if not target < 0:
        raise DomainError(f"calibration target must be negative, got {target}")
    if not screening > 0:
        raise DomainError(f"screening length must be positive, got {screening}")

    def mismatch(amplitude: float) -> float:
        return ground_state_energy(grid, Potential.yukawa(amplitude, screening)) - target

    lower, upper = bracket
    f_lower, f_upper = mismatch(lower), mismatch(upper)
    if f_lower * f_upper > 0:
        logger.error(f"Calibration bracket [{lower}, {upper}] does not enclose E={target} for a={screening}")
        raise CalibrationError()

    amplitude = bisect(mismatch, lower, upper, xtol=xtol, maxiter=200)
    logger.info(f"Calibrated Yukawa a={screening}: A={amplitude:.12f} for E0={target}")
    return float(amplitude)


def half_step_energy_shift(grid: RadialGrid, pot: Potential) -> float:
    """Change of the ℓ = 0 ground energy when the same extent is re-diagonalized at half the step"""
    finer = RadialGrid(step=grid.step / 2, n_points=2 * grid.n_points)
    return ground_state_energy(finer, pot) - ground_state_energy(grid, pot)


@dataclass(frozen=True)
class BoundProjector:
    """Orthogonal projector Q onto field-free bound states with ℓ ≤ L_b"""
    grid: RadialGrid
    l_b: int
    states: Dict[int, np.ndarray]
    energies: Dict[int, np.ndarray]

    def channel_states(self, ell: int) -> List[BoundState]:
        vectors = self.states.get(ell)
        if vectors is None:
            return []
        return [
            BoundState(ell=ell, n_index=i, energy=float(self.energies[ell][i]), vector=vectors[i])
            for i in range(vectors.shape[0])
        ]

    def all_states(self) -> List[BoundState]:
        return [state for ell in range(self.l_b + 1) for state in self.channel_states(ell)]

    def state_count(self) -> int:
        return sum(vectors.shape[0] for vectors in self.states.values())

    def truncated(self, l_b: int) -> "BoundProjector":
        """Projector restricted to channels ℓ ≤ l_b"""
        if l_b > self.l_b:
            raise DomainError(f"cannot extend projector from L_b={self.l_b} to {l_b}")
        return BoundProjector(
            grid=self.grid,
            l_b=l_b,
            states={ell: v for ell, v in self.states.items() if ell <= l_b},
            energies={ell: e for ell, e in self.energies.items() if ell <= l_b},
        )


def build_projector(grid: RadialGrid, pot: Potential, l_b: int, max_n: int = 15) -> BoundProjector:
    """
    Diagonalize every channel ℓ ≤ L_b and keep its negative-energy states

    States are capped at principal quantum number n ≤ max_n, i.e. at most
    max_n - ℓ states per channel.
    """
    states: Dict[int, np.ndarray] = {}
    energies: Dict[int, np.ndarray] = {}
    for ell in range(l_b + 1):
        cap = max_n - ell
        if cap < 1:
            states[ell] = np.zeros((0, grid.n_points))
            energies[ell] = np.zeros(0)
            continue
        found = bound_states(grid, pot, ell, cap)
        states[ell] = np.array([s.vector for s in found]).reshape(len(found), grid.n_points)
        energies[ell] = np.array([s.energy for s in found])
    projector = BoundProjector(grid=grid, l_b=l_b, states=states, energies=energies)
    logger.info(f"Built bound projector: L_b={l_b}, {projector.state_count()} states, {pot.describe()}")
    return projector


def ground_state(projector: BoundProjector, l_max: int) -> WaveFunction:
    """Lowest ℓ = 0 bound state embedded in an (L_max + 1)-channel wavefunction"""
    vectors = projector.states.get(0)
    if vectors is None or vectors.shape[0] == 0:
        raise DomainError("potential supports no ℓ=0 bound state on this grid")
    return WaveFunction.from_radial(projector.grid, vectors[0], 0, l_max)


def project_bound(psi: WaveFunction, projector: BoundProjector) -> WaveFunction:
    """φ = Σ_{nℓ, ℓ ≤ L_b} |nℓ⟩⟨nℓ|ψ⟩; channels above L_b are zero in φ"""
    _require_same_grid(psi.grid, projector.grid)
    phi = WaveFunction.zeros(psi.grid, psi.l_max)
    step = psi.grid.step
    for ell in range(min(projector.l_b, psi.l_max) + 1):
        vectors = projector.states.get(ell)
        if vectors is None or vectors.shape[0] == 0:
            continue
        overlaps = step * (vectors @ psi.coefficients[ell])
        phi.coefficients[ell] = vectors.T @ overlaps
    return phi


def bound_population(psi: WaveFunction, projector: BoundProjector) -> float:
    return project_bound(psi, projector).norm_squared()


def ionization_probability(psi_final: WaveFunction, projector: BoundProjector) -> float:
    """P = ‖ψ - Qψ‖², the squared norm of the continuum part"""
    norm_squared = psi_final.norm_squared()
    if norm_squared > 1.0 + 1e-6:
        logger.warning(f"ionization_probability called with unnormalized state (‖ψ‖²={norm_squared:.9f})")
    chi = psi_final - project_bound(psi_final, projector)
    return chi.norm_squared()
