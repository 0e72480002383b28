#!/usr/bin/env python3
"""
Common test data for ionization lab tests.

Small configurations that propagate in milliseconds, desk-scale parameters
for the slow physics checks, and reference values.
"""

# Small grid for unit tests of the propagator and projector
SMALL_GRID_STEP = 0.1
SMALL_GRID_EXTENT = 40.0
SMALL_L_MAX = 4

# Hydrogen bound-state energies -1/(2n²)
HYDROGEN_S_ENERGIES = [-0.5, -0.125, -1.0 / 18.0]

# (4/0.06)·exp(-2/0.18)
ADK_RATE_AT_0_06 = 9.963e-4

# Short high-frequency pulse on a tiny box; a full run takes a few hundred steps
TINY_CONFIG_TEXT = """
# tiny end-to-end configuration
pulse.peak_field=0.1
pulse.omega=0.5
pulse.n_cycles=1
signal.alpha=0.0001
signal.epsilon=T/100
grid.dr=0.2
grid.r_max=20
propagation.dt=0.05
propagation.l_max=3
projector.l_b=2
projector.max_n=6
scan.e0_values=0.08,0.1
scan.tau_values=0.4*T,0.5*T,0.6*T
scan.levels=0.5
"""

# Desk-scale production-like parameters
DESK_CONFIG_TEXT = """
pulse.peak_field=0.06
pulse.omega=0.02
pulse.n_cycles=1
signal.alpha=0.001
signal.epsilon=T/1000
grid.dr=0.05
grid.r_max=400
propagation.dt=0.02
propagation.l_max=30
projector.l_b=12
scan.e0_values=0.05,0.055,0.06,0.065,0.07
scan.tau_count=9
scan.tau_half_width=T/8
scan.levels=0.5,0.8
"""

YUKAWA_SCREENING_LENGTHS = [2.0, 5.0]

SAMPLE_JOURNAL_RECORDS = [
    ("baseline", 0, None, 0.0012345678901234567),
    ("cell", 0, 0, -3.2e-07),
    ("cell", 0, 1, 1.0e-06),
]
