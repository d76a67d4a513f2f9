"""Angle-robust joint transmit waveform / receive filter design for colocated MIMO radar."""

__version__ = "0.1.0"

from robustmimo.model import Interferer, Scenario, TargetSector
from robustmimo.optimizer import (
    CycleReport,
    CycleSettings,
    DesignPair,
    MultiStartResult,
    cyclic_design,
    multi_start,
    nonrobust_design,
    worst_case_sinr,
)
from robustmimo.synthesis import SynthesisResult

__all__ = [
    "CycleReport",
    "CycleSettings",
    "DesignPair",
    "Interferer",
    "MultiStartResult",
    "Scenario",
    "SynthesisResult",
    "TargetSector",
    "cyclic_design",
    "multi_start",
    "nonrobust_design",
    "worst_case_sinr",
]
