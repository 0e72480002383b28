#!/usr/bin/env python3
"""
Tests for the quasistatic tunneling rate and its first variation
"""

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from ionization_lab.core.adk import (
    HYDROGEN,
    AdkParams,
    adk_contours,
    adk_delta_p,
    adk_delta_p_quadrature,
    instantaneous_delta_p,
    rate,
    rate_derivative,
)
from ionization_lab.core.fields import PulseSpec, field_peak_time, fundamental_field
from ionization_lab.processors.rates import delay_report, instantaneous_probability, tau_axis
from ionization_lab.utils import AdkError, DomainError
from tests.fixtures.test_data import ADK_RATE_AT_0_06


@pytest.fixture
def pulse():
    return PulseSpec(peak_field=0.06, omega=0.02, n_cycles=1)


class TestRate:
    """Tests for W(E)"""

    def test_reference_value(self):
        assert rate(0.06) == pytest.approx(ADK_RATE_AT_0_06, rel=1e-3)

    def test_hydrogen_closed_form(self):
        fields = np.linspace(0.02, 0.2, 19)
        np.testing.assert_allclose(rate(fields), 4.0 / fields * np.exp(-2.0 / (3.0 * fields)), rtol=1e-12)

    def test_even_in_field(self):
        fields = np.array([0.03, 0.05, 0.09])
        np.testing.assert_array_equal(rate(-fields), rate(fields))

    def test_zero_field(self):
        assert rate(0.0) == 0.0
        np.testing.assert_array_equal(rate(np.array([0.0, 1e-13])), [0.0, 0.0])

    def test_deeper_binding_ionizes_less(self):
        assert rate(0.06, AdkParams(ionization_potential=0.9)) < rate(0.06, HYDROGEN)

    def test_invalid_params(self):
        with pytest.raises(DomainError):
            AdkParams(ionization_potential=0.0)
        with pytest.raises(DomainError):
            AdkParams(charge=-1.0)


class TestRateDerivative:
    """Tests for dW/dE"""

    def test_matches_central_differences(self):
        h = 1e-7
        for field in np.linspace(0.02, 0.15, 50):
            numeric = (rate(field + h) - rate(field - h)) / (2 * h)
            assert rate_derivative(field) == pytest.approx(numeric, rel=1e-5)

    def test_odd_in_field(self):
        assert rate_derivative(-0.06) == pytest.approx(-rate_derivative(0.06))
        assert rate_derivative(0.06) > 0

    def test_positive_and_growing_below_0_2(self):
        assert np.all(rate_derivative(np.linspace(0.01, 0.199, 100)) > 0)
        assert rate_derivative(0.05) < rate_derivative(0.07)

    def test_zero_field_is_singular(self):
        with pytest.raises(AdkError) as exc_info:
            rate_derivative(0.0)
        assert "derivative singular at zero field" in str(exc_info.value)
        with pytest.raises(AdkError):
            rate_derivative(np.array([0.05, 0.0]))


class TestAdkDeltaP:
    """Tests for the linear and nonlinear instantaneous-rate response"""

    def test_sign_follows_field(self, pulse):
        peak = field_peak_time(pulse)
        value = adk_delta_p(0.06, peak, 0.001, pulse)
        assert value != 0
        assert math.copysign(1.0, value) == math.copysign(1.0, fundamental_field(peak, pulse))
        flipped = adk_delta_p(0.06, peak, -0.001, pulse)
        assert flipped == pytest.approx(-value)

    def test_grows_with_e0(self, pulse):
        peak = field_peak_time(pulse)
        values = [abs(adk_delta_p(e0, peak, 0.001, pulse)) for e0 in (0.04, 0.05, 0.06, 0.07)]
        assert values == sorted(values)

    def test_symmetric_about_field_peak(self, pulse):
        peak = field_peak_time(pulse)
        for shift in (0.02 * pulse.period, 0.1 * pulse.period):
            assert adk_delta_p(0.06, peak - shift, 0.001, pulse) == pytest.approx(
                adk_delta_p(0.06, peak + shift, 0.001, pulse), rel=1e-4
            )

    def test_zero_alpha(self, pulse):
        assert adk_delta_p(0.06, 100.0, 0.0, pulse) == 0.0

    def test_tau_outside_pulse(self, pulse):
        with pytest.raises(DomainError):
            adk_delta_p(0.06, pulse.duration + 1.0, 0.001, pulse)

    def test_quadrature_agrees_for_short_kick(self, pulse):
        peak = field_peak_time(pulse)
        epsilon = pulse.period / 1000
        assert adk_delta_p_quadrature(0.06, peak, 0.001, epsilon, pulse) == pytest.approx(
            adk_delta_p(0.06, peak, 0.001, pulse), rel=1e-3
        )

    def test_nonlinear_matches_linear_for_weak_kick(self, pulse):
        peak = field_peak_time(pulse)
        epsilon = pulse.period / 1000
        assert instantaneous_delta_p(0.06, peak, 1e-6, epsilon, pulse) == pytest.approx(
            adk_delta_p_quadrature(0.06, peak, 1e-6, epsilon, pulse), rel=1e-3
        )


class TestAdkContours:
    """Tests for the ADK reference surface"""

    def test_surface_shape_and_baseline(self, pulse):
        e0_values = [0.05, 0.06, 0.07]
        taus = tau_axis(pulse, 9)
        surface = adk_contours(e0_values, taus, pulse, alpha=0.001, epsilon=pulse.period / 1000)
        assert surface.source == "adk"
        assert surface.delta_p.shape == (3, 9)
        assert np.all(np.diff(surface.baseline) > 0)
        assert surface.baseline[1] == pytest.approx(
            instantaneous_probability(rate, pulse.with_peak_field(0.06), 4000), rel=1e-12
        )
        assert np.all(np.isfinite(surface.delta_p))

    def test_mirror_symmetric_about_midpoint(self, pulse):
        middle = pulse.duration / 2
        offsets = np.array([0.2, 0.1, 0.03]) * pulse.period
        taus = np.concatenate([middle - offsets, [middle], (middle + offsets)[::-1]])
        surface = adk_contours([0.05, 0.06, 0.07], taus, pulse, alpha=0.001, epsilon=pulse.period / 1000)
        np.testing.assert_allclose(surface.delta_p, surface.delta_p[:, ::-1], rtol=1e-11, atol=0.0)

    def test_contour_is_parabolic_near_field_peak(self, pulse):
        peak = field_peak_time(pulse)
        level = abs(adk_delta_p(0.06, peak, 0.001, pulse))

        def contour_e0(tau):
            return brentq(lambda e0: abs(adk_delta_p(e0, tau, 0.001, pulse)) - level, 0.055, 0.08, xtol=1e-15)

        offsets = np.linspace(-0.0125, 0.0125, 11) * pulse.period
        e0_line = np.array([contour_e0(peak + s) for s in offsets])
        coefficients = np.polyfit(offsets, e0_line, 2)
        residuals = e0_line - np.polyval(coefficients, offsets)
        curvature_term = coefficients[0] * offsets.max() ** 2
        assert curvature_term > 0
        assert np.max(np.abs(residuals)) < 0.01 * curvature_term

    def test_empty_axes(self, pulse):
        with pytest.raises(DomainError):
            adk_contours([], [100.0], pulse, alpha=0.001, epsilon=0.3)

    def test_contour_midpoints_sit_on_field_peak(self, pulse):
        surface = adk_contours([0.05, 0.06], tau_axis(pulse, 17), pulse, alpha=0.001,
                               epsilon=pulse.period / 1000)
        report = delay_report(surface, [0.5, 0.8])
        assert report.errors() == []
        for delay in report.delays():
            assert abs(delay) < 1e-3 * pulse.period
