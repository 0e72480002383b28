"""
First variation of the ionization probability and its analysis.

δP(E₀, τ) = P[E_f + δE] - P[E_f] from pairs of full propagations, the
functional-derivative estimate δP/(α√π), the τ grid around the field
maximum, per-row contour crossings and the contour-midpoint delay report.
"""

import logging
import math
from typing import TYPE_CHECKING, Callable, Dict, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.integrate import simpson

from ..core.fields import PulseSpec, SignalKick, field_peak_time, total_field
from ..core.simulation import SimulationContext, context_for
from ..models import DelayEntry, DelayReport, ScanResult
from ..utils import ContourError, DomainError, au_to_attoseconds

if TYPE_CHECKING:
    from ..config.settings import RunConfig

logger = logging.getLogger("ionization_lab.rates")

MIN_QUADRATURE_POINTS = 100


def kick_area(alpha: float) -> float:
    """Time integral of the Gaussian kick, α·√π"""
    return alpha * math.sqrt(math.pi)


def functional_derivative_estimate(delta_p: float, alpha: float) -> float:
    """δP/(α·√π), the first variation per unit kick area"""
    if alpha == 0:
        raise DomainError("alpha must be non-zero")
    return delta_p / kick_area(alpha)


def analysis_window(pulse: PulseSpec) -> Tuple[float, float]:
    """τ ∈ [t_peak - T/4, t_peak + T/4] around the highest field maximum"""
    peak = field_peak_time(pulse)
    return peak - 0.25 * pulse.period, peak + 0.25 * pulse.period


def tau_axis(pulse: PulseSpec, count: int, half_width: Optional[float] = None) -> np.ndarray:
    """
    `count` equally spaced kick times centred on the field maximum

    Args:
        pulse: Fundamental pulse
        count: Number of τ values (odd counts include the peak itself)
        half_width: Half width of the span; defaults to T/4
    """
    if count < 1:
        raise DomainError(f"tau count must be positive, got {count}")
    if half_width is None:
        half_width = 0.25 * pulse.period
    peak = field_peak_time(pulse)
    if count == 1:
        return np.array([peak])
    values = np.linspace(peak - half_width, peak + half_width, count)
    if values[0] <= 0 or values[-1] >= pulse.duration:
        raise DomainError(f"tau span ±{half_width} around {peak:.6g} leaves (0, {pulse.duration:.6g})")
    return values


class FirstVariation:
    """
    δP evaluations for one configuration with cached baselines

    Baselines are keyed by (E₀, time-grid signature): a kicked run and its
    baseline always share the same step sequence, so a pulse whose kick
    forces a refined grid gets a matched baseline of its own.
    """

    def __init__(self, context: SimulationContext, config: "RunConfig"):
        self.context = context
        self.config = config
        self._baselines: Dict[Tuple[float, tuple], float] = {}
        # baseline keys whose run tripped the reflection sentinel
        self._flagged: Set[Tuple[float, tuple]] = set()
        self.runs = 0
        self.last_valid = True

    def _probability(self, pulse: PulseSpec, plan_pulse: PulseSpec) -> Tuple[float, bool]:
        plan = self.context.plan(plan_pulse, self.config.propagation)
        result = self.context.propagator.propagate(self.context.initial_state, pulse, plan, grid_pulse=plan_pulse)
        self.runs += 1
        if not result.valid:
            logger.warning(f"Run at E0={pulse.peak_field} flagged invalid by the reflection sentinel")
        return self.context.probability(result), result.valid

    def _signature(self, pulse: PulseSpec) -> tuple:
        return self.context.plan(pulse, self.config.propagation).signature(pulse)

    def _baseline_key(self, e0: float, kicked: Optional[PulseSpec]) -> Tuple[float, tuple]:
        fundamental = self.config.pulse.to_pulse().with_peak_field(e0)
        return e0, self._signature(kicked if kicked is not None else fundamental)

    def seed_baseline(self, e0: float, value: float, valid: bool = True):
        """Register a baseline computed elsewhere on the uniform (unkicked) grid"""
        key = self._baseline_key(e0, None)
        self._baselines[key] = value
        if valid:
            self._flagged.discard(key)
        else:
            self._flagged.add(key)

    def baseline(self, e0: float, kicked: Optional[PulseSpec] = None) -> float:
        """
        P[E_f] on the time grid of `kicked` (or the uniform grid when None)
        """
        key = self._baseline_key(e0, kicked)
        if key not in self._baselines:
            fundamental = self.config.pulse.to_pulse().with_peak_field(e0)
            value, valid = self._probability(fundamental, kicked if kicked is not None else fundamental)
            self._baselines[key] = value
            if not valid:
                self._flagged.add(key)
        return self._baselines[key]

    def baseline_valid(self, e0: float, kicked: Optional[PulseSpec] = None) -> bool:
        """False when the cached baseline run tripped the reflection sentinel"""
        return self._baseline_key(e0, kicked) not in self._flagged

    def delta_p(self, e0: float, tau: float, alpha: Optional[float] = None,
                epsilon: Optional[float] = None) -> float:
        """
        P[E_f + δE] - P[E_f] for a kick at τ

        Both terms come from full propagations with identical numerical
        parameters. α = 0 evaluates the baseline pipeline twice and gives 0.
        last_valid records whether both runs stayed clear of the box edge.
        """
        alpha = self.config.signal.alpha if alpha is None else alpha
        epsilon = self.config.signal.epsilon if epsilon is None else epsilon
        fundamental = self.config.pulse.to_pulse().with_peak_field(e0)
        if not 0.0 < tau < fundamental.duration:
            raise DomainError(f"tau={tau} outside (0, {fundamental.duration})")
        if alpha == 0:
            value = self.baseline(e0) - self.baseline(e0)
            self.last_valid = self.baseline_valid(e0)
            return value
        kicked = fundamental.with_signal(SignalKick(tau=tau, alpha=alpha, epsilon=epsilon))
        reference = self.baseline(e0, kicked)
        probability, valid = self._probability(kicked, kicked)
        self.last_valid = valid and self.baseline_valid(e0, kicked)
        value = probability - reference
        logger.debug(f"deltaP(E0={e0}, tau={tau:.6f}) = {value:.6e}")
        return value


def delta_p(e0: float, tau: float, config: "RunConfig") -> float:
    """One δP evaluation with a freshly resolved simulation context"""
    return FirstVariation(context_for(config), config).delta_p(e0, tau)


def contour_crossings(tau_values: Sequence[float], row: Sequence[float], level: float,
                      window: Optional[Tuple[float, float]] = None) -> Tuple[float, float]:
    """
    Leftmost and rightmost crossings of `level` by a sampled row

    Crossings are linearly interpolated between samples; samples equal to
    the level count as crossings. Only samples inside `window` are used.

    Raises:
        ContourError: "level outside row range" or "non-monotone flanks"
    """
    taus = np.asarray(tau_values, dtype=float)
    values = np.asarray(row, dtype=float)
    if taus.shape != values.shape:
        raise DomainError(f"tau axis {taus.shape} and row {values.shape} differ in length")
    if window is not None:
        inside = (taus >= window[0]) & (taus <= window[1])
        taus, values = taus[inside], values[inside]
    if taus.size < 2 or not np.all(np.isfinite(values)):
        raise ContourError("row has too few finite samples in the analysis window")
    if not values.min() <= level <= values.max():
        raise ContourError("level outside row range")

    shifted = values - level
    crossings = []
    for k in range(taus.size - 1):
        a, b = shifted[k], shifted[k + 1]
        if a == 0.0:
            crossings.append(taus[k])
        elif a * b < 0.0:
            crossings.append(taus[k] + (taus[k + 1] - taus[k]) * a / (a - b))
    if shifted[-1] == 0.0:
        crossings.append(taus[-1])

    if len(crossings) > 2:
        raise ContourError("non-monotone flanks")
    if len(crossings) < 2:
        raise ContourError("level crossed only once in the analysis window")
    return float(crossings[0]), float(crossings[1])


def parabolic_peak(tau_values: np.ndarray, row: np.ndarray, index: int) -> float:
    """Vertex of the parabola through the maximum sample and its neighbours"""
    if index <= 0 or index >= row.size - 1:
        return float(tau_values[index])
    t0, t1, t2 = tau_values[index - 1:index + 2]
    y0, y1, y2 = row[index - 1:index + 2]
    denominator = (t0 - t1) * (t0 - t2) * (t1 - t2)
    a = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / denominator
    b = (t2 ** 2 * (y0 - y1) + t1 ** 2 * (y2 - y0) + t0 ** 2 * (y1 - y2)) / denominator
    if a >= 0:
        return float(t1)
    return float(-b / (2.0 * a))


def delay_report(scan: ScanResult, levels: Sequence[float]) -> DelayReport:
    """
    Contour-midpoint delays of every row relative to the field maximum

    Rows are oriented by the sign of their largest-magnitude entry so that
    the response peak is a maximum whatever the sign of the field at its
    peak; levels are fractions of that oriented maximum.
    """
    pulse = PulseSpec(peak_field=float(scan.e0_values[0]), omega=scan.omega, n_cycles=scan.n_cycles)
    t_peak = field_peak_time(pulse)
    window = (t_peak - 0.25 * pulse.period, t_peak + 0.25 * pulse.period)
    taus = scan.tau_values
    inside = (taus >= window[0]) & (taus <= window[1])
    report = DelayReport(field_peak_time=t_peak, tau_step=scan.tau_step)

    for i, e0 in enumerate(scan.e0_values):
        e0 = float(e0)
        row = scan.delta_p[i]
        row_taus = taus[inside]
        row_window = row[inside]

        if row_window.size == 0 or not np.all(np.isfinite(row_window)):
            message = "row has failed or missing cells in the analysis window"
            logger.error(f"Delay analysis for E0={e0}: {message}")
            report.peak_times[e0] = None
            for level in levels:
                report.entries.append(DelayEntry(e0, level, None, None, None, scan.tau_step, message))
            continue

        orientation = 1.0 if row_window[np.argmax(np.abs(row_window))] >= 0 else -1.0
        oriented = orientation * row_window
        top = int(np.argmax(oriented))
        report.peak_times[e0] = parabolic_peak(row_taus, oriented, top)

        for level in levels:
            try:
                left, right = contour_crossings(row_taus, oriented, level * oriented[top])
                middle = 0.5 * (left + right)
                delay = middle - t_peak
                report.entries.append(DelayEntry(
                    e0=e0, level=level, tau_mid=middle, delay=delay,
                    delay_as=au_to_attoseconds(delay), tau_step=scan.tau_step,
                ))
            except ContourError as e:
                logger.error(f"Delay analysis for E0={e0}, level={level}: {e}")
                report.entries.append(DelayEntry(e0, level, None, None, None, scan.tau_step, str(e)))

    return report


def instantaneous_probability(rate: Callable, p: PulseSpec, n_quad: int = 2000) -> float:
    """
    Composite Simpson quadrature of ∫₀^T₁ W(E(t)) dt

    Args:
        rate: W as a function of field strength, vectorized over numpy arrays
        p: Pulse (a kick, if present, must be resolved by n_quad)
        n_quad: Number of quadrature intervals (rounded up to even)
    """
    if n_quad < MIN_QUADRATURE_POINTS:
        raise DomainError(f"n_quad must be at least {MIN_QUADRATURE_POINTS}, got {n_quad}")
    intervals = n_quad + (n_quad % 2)
    times = np.linspace(0.0, p.duration, intervals + 1)
    values = np.broadcast_to(np.asarray(rate(total_field(times, p)), dtype=float), times.shape)
    return float(simpson(values, x=times))
