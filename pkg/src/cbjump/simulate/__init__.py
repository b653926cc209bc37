"""Monte Carlo simulation of branching-process paths.

The hot loop is a compiled extension when available; a bit-identical pure
Python fallback is selected at import (or forced via CBJUMP_BACKEND=python).
"""
from .engine import (
    BACKEND,
    STATUS_NAMES,
    EnsembleStats,
    PathStats,
    SamplePath,
    SimConfig,
    available_backends,
    ensemble,
    run_ensemble,
    sample_cbi_star,
    sample_killed_star,
    sample_path,
)

__all__ = [
    "BACKEND",
    "STATUS_NAMES",
    "EnsembleStats",
    "PathStats",
    "SamplePath",
    "SimConfig",
    "available_backends",
    "ensemble",
    "run_ensemble",
    "sample_cbi_star",
    "sample_killed_star",
    "sample_path",
]
