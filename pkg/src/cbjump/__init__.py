"""Exact laws and Monte Carlo simulation of continuous-state branching processes.

Submodules
----------
mechanism   branching mechanisms and jump-intensity measures
flows       the two scalar Laplace-exponent ODE flows and their limits
maxjump     maximal-jump, first-jump, height, width and total-mass laws
simulate    path simulation (compiled kernel + pure-Python fallback)
validate    Monte Carlo checks of every law and of the conditioned limits
cli         command-line entry point
"""
from . import flows, maxjump, mechanism, simulate, validate

__version__ = "0.1.0"

__all__ = ["flows", "maxjump", "mechanism", "simulate", "validate", "__version__"]
