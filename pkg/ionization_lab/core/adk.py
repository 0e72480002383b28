"""
Quasistatic (ADK) tunneling rate and the instantaneous-rate first variation.

The rate is the single-active-electron s-state expression
    W(F) = |C|²·I·(2κ³/F)^(2n*-1)·exp(-2κ³/(3F)),  κ = √(2I), n* = Z/κ,
with |C|² = 2^(2n*)/(n*·Γ(2n*)). For hydrogen (I = 0.5, Z = 1) it reduces to
(4/F)·exp(-2/(3F)).
"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma

from ..models import ScanResult
from ..processors.rates import instantaneous_probability
from ..utils import AdkError, DomainError
from .fields import KICK_WINDOW_WIDTHS, PulseSpec, SignalKick, fundamental_field, signal_field

logger = logging.getLogger("ionization_lab.adk")

# Below this field strength the rate underflows to zero
_ZERO_FIELD = 1e-12


@dataclass(frozen=True)
class AdkParams:
    """Ionization potential I and residual charge Z, hydrogen by default"""
    ionization_potential: float = 0.5
    charge: float = 1.0

    def __post_init__(self):
        if not self.ionization_potential > 0:
            raise DomainError(f"ionization potential must be positive, got {self.ionization_potential}")
        if not self.charge > 0:
            raise DomainError(f"charge must be positive, got {self.charge}")

    @property
    def kappa(self) -> float:
        return math.sqrt(2.0 * self.ionization_potential)

    @property
    def n_star(self) -> float:
        return self.charge / self.kappa

    @property
    def prefactor(self) -> float:
        """|C|²·I"""
        n_star = self.n_star
        return 2.0 ** (2.0 * n_star) / (n_star * gamma(2.0 * n_star)) * self.ionization_potential


HYDROGEN = AdkParams()


def rate(field, params: AdkParams = HYDROGEN):
    """
    Static tunneling rate W(|E|) in atomic units

    Accepts a scalar or an array; W(0) = 0 as the limit of the essential
    singularity.
    """
    strength = np.abs(np.asarray(field, dtype=float))
    kappa3 = params.kappa ** 3
    exponent = 2.0 * params.n_star - 1.0
    safe = np.where(strength > _ZERO_FIELD, strength, 1.0)
    values = params.prefactor * (2.0 * kappa3 / safe) ** exponent * np.exp(-2.0 * kappa3 / (3.0 * safe))
    values = np.where(strength > _ZERO_FIELD, values, 0.0)
    return float(values) if np.ndim(field) == 0 else values


def rate_derivative(field, params: AdkParams = HYDROGEN):
    """dW/dE = W·(-(2n*-1)/F + 2κ³/(3F²))·sign(E); singular at E = 0"""
    values = np.asarray(field, dtype=float)
    if np.any(values == 0.0):
        raise AdkError("derivative singular at zero field")
    strength = np.abs(values)
    log_slope = -(2.0 * params.n_star - 1.0) / strength + 2.0 * params.kappa ** 3 / (3.0 * strength ** 2)
    derivative = rate(values, params) * log_slope * np.sign(values)
    return float(derivative) if np.ndim(field) == 0 else derivative


def adk_delta_p(e0: float, tau: float, alpha: float, p: PulseSpec, params: AdkParams = HYDROGEN) -> float:
    """
    Linear instantaneous-rate response W'(E_f(τ))·α√π to a kick of area α√π

    Depends on τ only through E_f(τ), so the surface has no memory.
    """
    if not 0.0 < tau < p.duration:
        raise DomainError(f"tau={tau} outside (0, {p.duration})")
    if alpha == 0:
        return 0.0
    pulse = p.without_signal().with_peak_field(e0)
    return rate_derivative(fundamental_field(tau, pulse), params) * alpha * math.sqrt(math.pi)


def _kick_window(pulse: PulseSpec):
    kick = pulse.signal
    lower = max(0.0, kick.tau - KICK_WINDOW_WIDTHS * kick.epsilon)
    upper = min(pulse.duration, kick.tau + KICK_WINDOW_WIDTHS * kick.epsilon)
    return lower, upper


def adk_delta_p_quadrature(e0: float, tau: float, alpha: float, epsilon: float, p: PulseSpec,
                           params: AdkParams = HYDROGEN) -> float:
    """∫ W'(E_f(t))·δE(t) dt with the explicit Gaussian kick shape"""
    pulse = p.with_peak_field(e0).with_signal(SignalKick(tau=tau, alpha=alpha, epsilon=epsilon))
    fundamental = pulse.without_signal()
    lower, upper = _kick_window(pulse)
    value, _ = quad(
        lambda t: rate_derivative(fundamental_field(t, fundamental), params) * signal_field(t, pulse),
        lower, upper, points=[tau], limit=200, epsabs=0.0, epsrel=1e-11,
    )
    return float(value)


def instantaneous_delta_p(e0: float, tau: float, alpha: float, epsilon: float, p: PulseSpec,
                          params: AdkParams = HYDROGEN) -> float:
    """
    Full nonlinear change P_inst[E_f + δE] - P_inst[E_f] of the instantaneous-rate probability

    The integrand vanishes outside the kick, so only the kick window is integrated.
    """
    pulse = p.with_peak_field(e0).with_signal(SignalKick(tau=tau, alpha=alpha, epsilon=epsilon))
    fundamental = pulse.without_signal()
    lower, upper = _kick_window(pulse)

    def integrand(t: float) -> float:
        base = fundamental_field(t, fundamental)
        return rate(base + signal_field(t, pulse), params) - rate(base, params)

    value, _ = quad(integrand, lower, upper, points=[tau], limit=200, epsabs=0.0, epsrel=1e-11)
    return float(value)


def adk_contours(e0_values: Sequence[float], tau_values: Sequence[float], p: PulseSpec,
                 alpha: float, epsilon: float, params: AdkParams = HYDROGEN,
                 fingerprint: str = "", n_quad: int = 4000) -> ScanResult:
    """
    ADK first-variation surface in the same shape as a TDSE scan

    Every contour of the table is a level set of |E_f(τ)|. The baseline of
    each row is the instantaneous-rate probability of the unkicked pulse.
    """
    e0_axis = np.asarray(e0_values, dtype=float)
    tau_axis = np.asarray(tau_values, dtype=float)
    if e0_axis.size == 0 or tau_axis.size == 0:
        raise DomainError("ADK surface needs non-empty E0 and tau axes")

    table = np.empty((e0_axis.size, tau_axis.size))
    baseline = np.empty(e0_axis.size)
    for i, e0 in enumerate(e0_axis):
        pulse = p.without_signal().with_peak_field(float(e0))
        baseline[i] = instantaneous_probability(lambda f: rate(f, params), pulse, n_quad)
        fields = np.asarray(fundamental_field(tau_axis, pulse), dtype=float)
        table[i] = rate_derivative(fields, params) * alpha * math.sqrt(math.pi)

    logger.info(f"ADK surface: {e0_axis.size}x{tau_axis.size} cells, I={params.ionization_potential}, Z={params.charge}")
    return ScanResult(
        e0_values=e0_axis,
        tau_values=tau_axis,
        delta_p=table,
        baseline=baseline,
        alpha=alpha,
        epsilon=epsilon,
        omega=p.omega,
        n_cycles=p.n_cycles,
        fingerprint=fingerprint,
        source="adk",
        metadata={"adk_ionization_potential": params.ionization_potential, "adk_charge": params.charge},
    )
