"""
Laser waveforms: the sin²-envelope fundamental pulse, the regularized delta
kick used as signal field, and scalar diagnostics of the waveform.

All functions accept scalars or numpy arrays of times and are pure functions
of an immutable PulseSpec.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np
from scipy.optimize import minimize_scalar

from ..utils import DomainError, SignalMissingError

logger = logging.getLogger("ionization_lab.fields")

ArrayLike = Union[float, np.ndarray]

# Half-width of the window around a kick outside which it is negligible, in units of ε
KICK_WINDOW_WIDTHS = 8.0

# Samples per optical cycle used to bracket the global field maximum
_PEAK_SAMPLES_PER_CYCLE = 512


@dataclass(frozen=True)
class SignalKick:
    """Gaussian kick (α/ε)·exp(-(t-τ)²/ε²) centred at τ"""
    tau: float
    alpha: float
    epsilon: float

    @property
    def area(self) -> float:
        """True time integral of the kick, α·√π"""
        return self.alpha * math.sqrt(math.pi)


@dataclass(frozen=True)
class PulseSpec:
    """Fundamental waveform parameters plus an optional signal kick"""
    peak_field: float
    omega: float
    n_cycles: int
    signal: Optional[SignalKick] = None

    def __post_init__(self):
        if not self.peak_field > 0:
            raise DomainError(f"peak_field must be positive, got {self.peak_field}")
        if not self.omega > 0:
            raise DomainError(f"omega must be positive, got {self.omega}")
        if int(self.n_cycles) != self.n_cycles or self.n_cycles < 1:
            raise DomainError(f"n_cycles must be a positive integer, got {self.n_cycles}")
        if self.signal is not None:
            kick = self.signal
            if not 0 < kick.tau < self.duration:
                raise DomainError(f"signal tau={kick.tau} outside (0, {self.duration})")
            if not kick.epsilon > 0:
                raise DomainError(f"signal epsilon must be positive, got {kick.epsilon}")
            if kick.alpha == 0:
                raise DomainError("signal alpha must be non-zero")

    @property
    def period(self) -> float:
        """Optical period T = 2π/ω"""
        return 2.0 * math.pi / self.omega

    @property
    def duration(self) -> float:
        """Total pulse duration T₁ = N·T"""
        return self.n_cycles * self.period

    def with_peak_field(self, peak_field: float) -> "PulseSpec":
        return replace(self, peak_field=peak_field)

    def with_signal(self, signal: Optional[SignalKick]) -> "PulseSpec":
        return replace(self, signal=signal)

    def without_signal(self) -> "PulseSpec":
        return replace(self, signal=None)


def _support(t: np.ndarray, p: PulseSpec) -> np.ndarray:
    return (t > 0.0) & (t < p.duration)


def _scalar_or_array(values: np.ndarray, t: ArrayLike) -> ArrayLike:
    return float(values) if np.ndim(t) == 0 else values


def vector_potential(t: ArrayLike, p: PulseSpec) -> ArrayLike:
    """A(t) = -(E₀/ω)·sin²(πt/T₁)·sin(ωt) on (0, T₁), zero elsewhere"""
    t_arr = np.asarray(t, dtype=float)
    envelope = np.sin(math.pi * t_arr / p.duration) ** 2
    values = -(p.peak_field / p.omega) * envelope * np.sin(p.omega * t_arr)
    return _scalar_or_array(np.where(_support(t_arr, p), values, 0.0), t)


def fundamental_field(t: ArrayLike, p: PulseSpec) -> ArrayLike:
    """
    Electric field E(t) = -dA/dt of the fundamental pulse, in closed form

    Args:
        t: Time(s) in atomic units
        p: Pulse parameters

    Returns:
        Field strength in atomic units; exactly zero outside (0, T₁)
    """
    t_arr = np.asarray(t, dtype=float)
    phase_env = math.pi * t_arr / p.duration
    envelope = np.sin(phase_env) ** 2
    envelope_rate = (math.pi / p.duration) * np.sin(2.0 * phase_env)
    values = (p.peak_field / p.omega) * (
        envelope_rate * np.sin(p.omega * t_arr) + envelope * p.omega * np.cos(p.omega * t_arr)
    )
    return _scalar_or_array(np.where(_support(t_arr, p), values, 0.0), t)


def signal_field(t: ArrayLike, p: PulseSpec) -> ArrayLike:
    """Regularized delta kick (α/ε)·exp(-(t-τ)²/ε²); its area is α·√π, not α"""
    if p.signal is None:
        raise SignalMissingError()
    kick = p.signal
    t_arr = np.asarray(t, dtype=float)
    values = (kick.alpha / kick.epsilon) * np.exp(-((t_arr - kick.tau) / kick.epsilon) ** 2)
    return _scalar_or_array(np.where(_support(t_arr, p), values, 0.0), t)


def total_field(t: ArrayLike, p: PulseSpec) -> ArrayLike:
    """Fundamental field plus the signal kick when one is configured"""
    field = fundamental_field(t, p)
    if p.signal is not None:
        field = field + signal_field(t, p)
    return field


def keldysh_gamma(omega: float, peak_field: float, ionization_potential: float) -> float:
    """γ = ω·√(2I)/E₀; γ ≲ 1 marks the tunneling regime"""
    if omega <= 0 or peak_field <= 0 or ionization_potential <= 0:
        raise DomainError(
            f"keldysh_gamma needs positive inputs, got omega={omega}, "
            f"E0={peak_field}, I={ionization_potential}"
        )
    return omega * math.sqrt(2.0 * ionization_potential) / peak_field


def kick_fwhm(epsilon: float) -> float:
    """Full width at half maximum of the Gaussian kick, 2·√(ln 2)·ε"""
    return 2.0 * math.sqrt(math.log(2.0)) * epsilon


def field_peak_time(p: PulseSpec, xatol: float = 1e-9) -> float:
    """
    Time of the global maximum of |E(t)| on (0, T₁)

    A dense sample locates the strongest half-cycle; a bounded scalar
    maximization then refines inside the two neighbouring samples.
    """
    fundamental = p.without_signal()
    n_samples = _PEAK_SAMPLES_PER_CYCLE * p.n_cycles + 1
    times = np.linspace(0.0, p.duration, n_samples)
    magnitudes = np.abs(fundamental_field(times, fundamental))
    best = int(np.argmax(magnitudes))
    lower = times[max(best - 1, 0)]
    upper = times[min(best + 1, n_samples - 1)]

    result = minimize_scalar(
        lambda t: -abs(fundamental_field(t, fundamental)),
        bounds=(lower, upper),
        method="bounded",
        options={"xatol": xatol},
    )
    peak = float(result.x)
    logger.debug(f"Field peak at t={peak:.9f} a.u. (|E|={abs(fundamental_field(peak, fundamental)):.6g})")
    return peak
