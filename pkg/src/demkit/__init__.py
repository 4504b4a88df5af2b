"""Detector-error-model workbench for repetition and rotated surface codes.

Simulates X-memory experiments under coherent (statevector) or twirled
(Pauli-frame) noise, estimates detector error models from syndrome
statistics alone, decodes with exact minimum-weight perfect matching and
measures logical error rates.
"""

__version__ = "0.1.0"

from .errors import CapabilityError, DegenerateStatisticsError

__all__ = [
    "__version__",
    "CapabilityError",
    "DegenerateStatisticsError",
]
