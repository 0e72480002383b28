"""Ionization Lab Package"""
from .core.fields import PulseSpec, SignalKick
from .processors.rates import FirstVariation
from .processors.scan import ScanService

__version__ = "1.0.0"
__all__ = ["PulseSpec", "SignalKick", "FirstVariation", "ScanService"]
