"""Locate the NAT that owns a home's public address: in the home or in the ISP."""

from revelio.kernels import BACKEND
from revelio.types import (AccessTechnology, Correction, Finding, GraObservation, HopObservation,
                           Placement, RevelioState, Verdict, VerdictKind)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AccessTechnology", "Correction", "Finding", "GraObservation", "HopObservation",
    "Placement", "RevelioState", "Verdict", "VerdictKind", "__version__",
]
