"""
Utility functions, constants and error classes for the ionization lab
"""

import hashlib
import logging
import os
from typing import Any, Dict, Optional

from dotenv import load_dotenv

# Constants
AU_TIME_AS = 24.18884  # one atomic unit of time in attoseconds

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(name)s - %(message)s'


def configure_logging(level: Optional[str] = None) -> logging.Logger:
    """
    Configure the root logger once for command-line use

    Args:
        level: Explicit level name; falls back to LOG_LEVEL from the environment

    Returns:
        logging.Logger: The package logger
    """
    load_dotenv()
    level_name = (level or os.environ.get("LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=getattr(logging, level_name, logging.INFO), format=LOG_FORMAT)
    return logging.getLogger("ionization_lab")


def fingerprint_text(text: str) -> str:
    """Stable SHA-256 hex digest of a canonical text"""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def record_checksum(record: Dict[str, Any]) -> str:
    """Checksum of a journal record, computed over every field except the checksum itself"""
    body = ";".join(f"{key}={record[key]!r}" for key in sorted(record) if key != "checksum")
    return fingerprint_text(body)


def format_float(value: float) -> str:
    """Full-precision decimal rendering used by every CSV writer"""
    return format(float(value), ".17g")


def au_to_attoseconds(t_au: float) -> float:
    return t_au * AU_TIME_AS


# Error handling classes
class IonizationLabError(Exception):
    """Base class for ionization lab errors"""

    def __init__(self, message: str, error_code: Optional[str] = None):
        super().__init__(message)
        self.error_code = error_code


class ConfigError(IonizationLabError):
    """Invalid, missing or unknown configuration entry"""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        location = []
        if line is not None:
            location.append(f"line {line}")
        if key is not None:
            location.append(f"key '{key}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}", error_code="config")


class DomainError(IonizationLabError, ValueError):
    """Physical input outside its domain (non-positive field, frequency, ...)"""
    pass


class SignalMissingError(IonizationLabError):
    """A signal-field operation was requested on a pulse without a kick"""

    def __init__(self, message: str = "no signal configured"):
        super().__init__(message, error_code="signal")


class GridMismatchError(IonizationLabError):
    """Wavefunction and projector live on different radial grids"""
    pass


class CalibrationError(IonizationLabError):
    """Yukawa amplitude calibration failed"""

    def __init__(self, message: str = "calibration bracket exhausted"):
        super().__init__(message, error_code="calibration")


class PropagationUnstableError(IonizationLabError):
    """Norm drift beyond tolerance during a propagation"""

    def __init__(self, norm_drift: float, time: float, message: str = "propagation unstable"):
        self.norm_drift = norm_drift
        self.time = time
        super().__init__(f"{message} (norm drift {norm_drift:.3e} at t={time:.4f} a.u.)",
                         error_code="unstable")


class ContourError(IonizationLabError):
    """Contour crossing could not be located on a row"""
    pass


class AdkError(IonizationLabError):
    """Quasistatic rate evaluated outside its domain"""
    pass


class ScanFailedError(IonizationLabError):
    """Every cell of a scan failed"""
    pass


class StorageError(IonizationLabError):
    """Malformed CSV, metadata or journal file"""
    pass
