"""Statevector simulation of controlled and two-party Bell-state quantum key agreement."""
from . import adversary, analysis, protocol, qcore
from .protocol import run_protocol1, run_protocol2
from .rng import derived_rng, make_rng

__all__ = ["adversary", "analysis", "protocol", "qcore", "run_protocol1", "run_protocol2", "derived_rng", "make_rng"]
__version__ = "0.1.0"
