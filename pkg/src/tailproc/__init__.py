"""Simulation and verification lab for tail processes of regularly varying time series."""
from .functionals import FunctionalSpec
from .mc import Estimate, IdentityReport
from .models import (
    IID,
    Deterministic,
    Empirical,
    EmpiricalTailProcess,
    Geometric,
    MovingAverage,
    SpectralModel,
    parse_model,
)
from .seqspace import FiniteSeq, PathBatch
from .clusterlab import BlockClusterEstimator, BlockingScheme, default_scheme
from .maxstable import M3Config, MaxStablePath, simulate_m3, simulate_m3_batch

__version__ = "0.1.0"

__all__ = [
    "BlockClusterEstimator",
    "BlockingScheme",
    "M3Config",
    "MaxStablePath",
    "default_scheme",
    "simulate_m3",
    "simulate_m3_batch",
    "Deterministic",
    "Empirical",
    "EmpiricalTailProcess",
    "Estimate",
    "FiniteSeq",
    "FunctionalSpec",
    "Geometric",
    "IID",
    "IdentityReport",
    "MovingAverage",
    "PathBatch",
    "SpectralModel",
    "parse_model",
]
