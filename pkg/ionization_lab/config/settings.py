"""Configuration settings for the ionization lab"""
import io
import logging
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from dotenv import load_dotenv
from dotenv.parser import parse_stream

from ..core.atom import Potential, RadialGrid
from ..core.fields import PulseSpec, SignalKick
from ..core.propagator import MAX_FINE_FRACTION
from ..utils import ConfigError, fingerprint_text, format_float

load_dotenv()

logger = logging.getLogger("ionization_lab.config")

DEFAULT_OUTPUT_DIR = os.getenv("IONIZATION_LAB_OUTPUT", "results")

# Defaults reproduce the production parameters; time values may use the period T
DEFAULTS: Dict[str, str] = {
    "pulse.peak_field": "0.06",
    "pulse.omega": "0.02",
    "pulse.n_cycles": "1",
    "signal.tau": "",
    "signal.alpha": "0.001",
    "signal.epsilon": "T/1000",
    "potential.kind": "coulomb",
    "potential.screening": "2.0",
    "potential.amplitude": "1.0",
    "potential.calibrate": "true",
    "potential.target_ip": "0.5",
    "grid.dr": "0.05",
    "grid.r_max": "700",
    "propagation.dt": "0.02",
    "propagation.l_max": "70",
    "propagation.fine_fraction": "0.1",
    "propagation.norm_tolerance": "1e-6",
    "propagation.diagnostics_every": "0",
    "projector.l_b": "12",
    "projector.max_n": "15",
    "scan.e0_values": "0.05,0.055,0.06,0.065,0.07",
    "scan.tau_values": "",
    "scan.tau_count": "17",
    "scan.tau_half_width": "T/4",
    "scan.levels": "0.5,0.8",
    "run.workers": "1",
    "run.output_dir": DEFAULT_OUTPUT_DIR,
}

FLOAT_KEYS = {
    "pulse.peak_field", "pulse.omega", "signal.alpha", "potential.screening",
    "potential.amplitude", "potential.target_ip", "grid.dr", "grid.r_max",
    "propagation.dt", "propagation.fine_fraction", "propagation.norm_tolerance",
}
TIME_KEYS = {"signal.tau", "signal.epsilon", "scan.tau_half_width"}
INT_KEYS = {
    "pulse.n_cycles", "propagation.l_max", "propagation.diagnostics_every",
    "projector.l_b", "projector.max_n", "scan.tau_count", "run.workers",
}
BOOL_KEYS = {"potential.calibrate"}
FLOAT_LIST_KEYS = {"scan.e0_values", "scan.levels"}
TIME_LIST_KEYS = {"scan.tau_values"}
OPTIONAL_KEYS = {"signal.tau", "scan.tau_values"}

# Keys that never change numerical results
FINGERPRINT_EXCLUDED = {"run.workers", "run.output_dir"}

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_TIME_PATTERN = re.compile(
    rf"^(?:(?P<scaled>{_NUMBER})\s*\*\s*T|T\s*/\s*(?P<divisor>{_NUMBER})|(?P<period>T)|(?P<plain>{_NUMBER}))$"
)

Value = Union[float, int, bool, str, Tuple[float, ...], None]


def _binding_line(binding) -> int:
    """1-based line of a binding's first non-blank character; parse_stream folds leading blank lines in"""
    text = binding.original.string
    leading = text[: len(text) - len(text.lstrip())]
    return binding.original.line + leading.count("\n")


def parse_time(text: str, period: float) -> float:
    """Evaluate `number | number*T | T/number | T` in atomic units"""
    match = _TIME_PATTERN.match(text.strip())
    if match is None:
        raise ValueError(f"'{text}' is not a time (expected number, number*T, T/number or T)")
    if match.group("scaled") is not None:
        return float(match.group("scaled")) * period
    if match.group("divisor") is not None:
        divisor = float(match.group("divisor"))
        if divisor == 0:
            raise ValueError("division of T by zero")
        return period / divisor
    if match.group("period") is not None:
        return period
    return float(match.group("plain"))


@dataclass(frozen=True)
class PulseConfig:
    peak_field: float
    omega: float
    n_cycles: int

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    def to_pulse(self, signal: Optional[SignalKick] = None) -> PulseSpec:
        return PulseSpec(self.peak_field, self.omega, self.n_cycles, signal)


@dataclass(frozen=True)
class SignalConfig:
    tau: Optional[float]
    alpha: float
    epsilon: float

    def kick(self, tau: Optional[float] = None) -> SignalKick:
        center = self.tau if tau is None else tau
        if center is None:
            raise ConfigError("signal tau required", key="signal.tau")
        return SignalKick(tau=center, alpha=self.alpha, epsilon=self.epsilon)


@dataclass(frozen=True)
class PotentialConfig:
    kind: str
    screening: float
    amplitude: float
    calibrate: bool
    target_ip: float

    def to_potential(self, amplitude: Optional[float] = None) -> Potential:
        if self.kind == "coulomb":
            return Potential.coulomb()
        return Potential.yukawa(self.amplitude if amplitude is None else amplitude, self.screening)


@dataclass(frozen=True)
class GridConfig:
    dr: float
    r_max: float

    def to_grid(self) -> RadialGrid:
        return RadialGrid.from_extent(self.dr, self.r_max)


@dataclass(frozen=True)
class PropagationConfig:
    dt: float
    l_max: int
    fine_fraction: float
    norm_tolerance: float
    diagnostics_every: int


@dataclass(frozen=True)
class ProjectorConfig:
    l_b: int
    max_n: int


@dataclass(frozen=True)
class ScanConfig:
    e0_values: Tuple[float, ...]
    tau_values: Optional[Tuple[float, ...]]
    tau_count: int
    tau_half_width: float
    levels: Tuple[float, ...]


@dataclass(frozen=True)
class RunSection:
    workers: int
    output_dir: str


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved and validated run configuration"""
    pulse: PulseConfig
    signal: SignalConfig
    potential: PotentialConfig
    grid: GridConfig
    propagation: PropagationConfig
    projector: ProjectorConfig
    scan: ScanConfig
    run: RunSection
    values: Dict[str, Value] = field(repr=False, compare=False, default_factory=dict)

    def canonical_text(self) -> str:
        """Sorted key=value lines of every result-relevant setting"""
        lines = [
            f"{key}={_canonical(value)}"
            for key, value in sorted(self.values.items())
            if key not in FINGERPRINT_EXCLUDED
        ]
        return "\n".join(lines) + "\n"

    @property
    def fingerprint(self) -> str:
        return fingerprint_text(self.canonical_text())

    def to_dict(self) -> Dict[str, Value]:
        return {key: (list(v) if isinstance(v, tuple) else v) for key, v in sorted(self.values.items())}

    def with_overrides(self, overrides: Dict[str, Any]) -> "RunConfig":
        """
        Derived configuration with some dotted keys replaced

        Values are typed (floats, ints, tuples); time keys take atomic units.
        """
        values = dict(self.values)
        for key, value in overrides.items():
            if key not in DEFAULTS:
                raise ConfigError("unknown configuration key", key=key)
            values[key] = tuple(value) if isinstance(value, list) else value
        return build_config(values)


def _canonical(value: Value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, tuple):
        return ",".join(format_float(v) for v in value)
    return str(value)


def _convert(key: str, text: str, period: float) -> Value:
    text = text.strip()
    if key in OPTIONAL_KEYS and text == "":
        return None
    if key in FLOAT_KEYS:
        return float(text)
    if key in TIME_KEYS:
        return parse_time(text, period)
    if key in INT_KEYS:
        number = float(text)
        if number != int(number):
            raise ValueError(f"'{text}' is not an integer")
        return int(number)
    if key in BOOL_KEYS:
        lowered = text.lower()
        if lowered not in ("true", "false", "yes", "no", "1", "0"):
            raise ValueError(f"'{text}' is not a boolean")
        return lowered in ("true", "yes", "1")
    if key in FLOAT_LIST_KEYS:
        return tuple(float(item) for item in text.split(",") if item.strip())
    if key in TIME_LIST_KEYS:
        return tuple(parse_time(item, period) for item in text.split(",") if item.strip())
    return text


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    """
    Parse flat `dotted.key=value` text into a validated RunConfig

    Raises:
        ConfigError: With line and key of the first offending entry
    """
    raw: Dict[str, str] = dict(DEFAULTS)
    lines: Dict[str, int] = {}
    for binding in parse_stream(io.StringIO(text)):
        line = _binding_line(binding)
        if binding.error:
            raise ConfigError(f"cannot parse '{binding.original.string.strip()}'", line=line)
        if binding.key is None:
            continue
        if binding.key not in DEFAULTS:
            raise ConfigError("unknown configuration key", key=binding.key, line=line)
        if binding.key in lines:
            raise ConfigError(f"duplicate key (first set on line {lines[binding.key]})", key=binding.key, line=line)
        raw[binding.key] = binding.value if binding.value is not None else ""
        lines[binding.key] = line

    try:
        omega = float(raw["pulse.omega"])
    except ValueError as e:
        raise ConfigError(str(e), key="pulse.omega", line=lines.get("pulse.omega"))
    if not omega > 0:
        raise ConfigError(f"must be positive, got {omega}", key="pulse.omega", line=lines.get("pulse.omega"))
    period = 2.0 * math.pi / omega

    values: Dict[str, Value] = {}
    for key, text in raw.items():
        try:
            values[key] = _convert(key, text, period)
        except ValueError as e:
            raise ConfigError(str(e), key=key, line=lines.get(key))

    config = build_config(values, lines)
    logger.debug(f"Loaded configuration from {source} (fingerprint {config.fingerprint[:12]})")
    return config


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """Load a configuration file, or the defaults when no path is given"""
    if path is None:
        logger.info("No configuration file given, using defaults")
        return parse_config_text("", source="<defaults>")
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file not found: {path}")
    logger.info(f"Loading configuration from {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))


def build_config(values: Dict[str, Value], lines: Optional[Dict[str, int]] = None) -> RunConfig:
    """Validate typed values and assemble the RunConfig tree"""
    lines = lines or {}

    def fail(key: str, message: str):
        raise ConfigError(message, key=key, line=lines.get(key))

    def positive(key: str):
        value = values[key]
        if not isinstance(value, (int, float)) or not value > 0:
            fail(key, f"must be positive, got {value}")

    for key in ("pulse.peak_field", "pulse.omega", "pulse.n_cycles", "signal.epsilon",
                "potential.screening", "potential.amplitude", "potential.target_ip",
                "grid.dr", "grid.r_max", "propagation.dt", "propagation.l_max",
                "propagation.norm_tolerance", "projector.max_n", "scan.tau_count",
                "scan.tau_half_width", "run.workers"):
        positive(key)

    period = 2.0 * math.pi / values["pulse.omega"]
    duration = values["pulse.n_cycles"] * period

    if values["signal.alpha"] == 0:
        fail("signal.alpha", "must be non-zero")
    tau = values["signal.tau"]
    if tau is not None and not 0 < tau < duration:
        fail("signal.tau", f"must lie inside (0, {duration:.6g})")
    if values["potential.kind"] not in ("coulomb", "yukawa"):
        fail("potential.kind", f"must be coulomb or yukawa, got '{values['potential.kind']}'")
    if values["grid.r_max"] < 10 * values["grid.dr"]:
        fail("grid.r_max", "must span at least 10 grid steps")
    if not 0 < values["propagation.fine_fraction"] <= MAX_FINE_FRACTION:
        fail("propagation.fine_fraction", f"must lie in (0, {MAX_FINE_FRACTION}]")
    if values["propagation.diagnostics_every"] < 0:
        fail("propagation.diagnostics_every", "must be non-negative")
    if values["projector.l_b"] < 0:
        fail("projector.l_b", "must be non-negative")
    if values["projector.l_b"] > values["propagation.l_max"]:
        fail("projector.l_b", f"must not exceed propagation.l_max={values['propagation.l_max']}")

    e0_values = values["scan.e0_values"]
    if not e0_values:
        fail("scan.e0_values", "must not be empty")
    if any(v <= 0 for v in e0_values):
        fail("scan.e0_values", "all field strengths must be positive")
    if any(b <= a for a, b in zip(e0_values, e0_values[1:])):
        fail("scan.e0_values", "must be strictly ascending")
    tau_values = values["scan.tau_values"]
    if tau_values is not None:
        if not tau_values:
            fail("scan.tau_values", "must not be empty")
        if any(b <= a for a, b in zip(tau_values, tau_values[1:])):
            fail("scan.tau_values", "must be strictly ascending")
        if any(not 0 < t < duration for t in tau_values):
            fail("scan.tau_values", f"all values must lie inside (0, {duration:.6g})")
    if any(not 0 < level < 1 for level in values["scan.levels"]):
        fail("scan.levels", "relative levels must lie in (0, 1)")

    return RunConfig(
        pulse=PulseConfig(values["pulse.peak_field"], values["pulse.omega"], values["pulse.n_cycles"]),
        signal=SignalConfig(tau, values["signal.alpha"], values["signal.epsilon"]),
        potential=PotentialConfig(
            kind=values["potential.kind"],
            screening=values["potential.screening"],
            amplitude=values["potential.amplitude"],
            calibrate=values["potential.calibrate"],
            target_ip=values["potential.target_ip"],
        ),
        grid=GridConfig(values["grid.dr"], values["grid.r_max"]),
        propagation=PropagationConfig(
            dt=values["propagation.dt"],
            l_max=values["propagation.l_max"],
            fine_fraction=values["propagation.fine_fraction"],
            norm_tolerance=values["propagation.norm_tolerance"],
            diagnostics_every=values["propagation.diagnostics_every"],
        ),
        projector=ProjectorConfig(values["projector.l_b"], values["projector.max_n"]),
        scan=ScanConfig(
            e0_values=tuple(e0_values),
            tau_values=None if tau_values is None else tuple(tau_values),
            tau_count=values["scan.tau_count"],
            tau_half_width=values["scan.tau_half_width"],
            levels=tuple(values["scan.levels"]),
        ),
        run=RunSection(values["run.workers"], str(values["run.output_dir"])),
        values=dict(values),
    )
