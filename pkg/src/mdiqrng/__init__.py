"""Decoy-state certification of measurement-device-independent quantum random numbers.

Modules: :mod:`qmath` (qubit linear algebra), :mod:`decoy` (finite-statistics
click-probability bounds), :mod:`tomo` (POVM parameter boxes and the fidelity
certificate), :mod:`entropy` (min-entropy and intensity search), :mod:`sim`
(detector model), :mod:`extract` (Toeplitz hashing) and :mod:`cli`.
"""
from .config import RunConfig
from .decoy import CountsTable, ExperimentConfig, Intensity
from .entropy import CertReport, certify, optimize_intensities
from .errors import (
    CountsParseError,
    DecoyUnavailable,
    DegenerateStatistics,
    IncompleteData,
    InfeasibleRegion,
    MdiQrngError,
    NoRandomness,
    ValidationError,
)
from .estimators import DecoyCertifier, IntensityOptimizer, ToeplitzExtractor
from .qmath import PovmParams, ProbeId
from .sim import DetectorModel, SimMode

__version__ = "0.1.0"

__all__ = [
    "CertReport",
    "CountsParseError",
    "CountsTable",
    "DecoyCertifier",
    "DecoyUnavailable",
    "DegenerateStatistics",
    "DetectorModel",
    "ExperimentConfig",
    "IncompleteData",
    "InfeasibleRegion",
    "Intensity",
    "IntensityOptimizer",
    "MdiQrngError",
    "NoRandomness",
    "PovmParams",
    "ProbeId",
    "RunConfig",
    "SimMode",
    "ToeplitzExtractor",
    "ValidationError",
    "certify",
    "optimize_intensities",
]
