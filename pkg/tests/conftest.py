import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from cbjump.mechanism import (
    BranchingMechanism,
    ExpDensity,
    FiniteAtoms,
    StablePower,
    TabulatedDensity,
    ZeroMeasure,
)


@pytest.fixture(scope="session")
def stable():
    """Critical stable: phi(lam) = lam**1.5."""
    return BranchingMechanism(0.0, 0.0, StablePower(1.5, 1.0))


@pytest.fixture(scope="session")
def atoms():
    """Critical with diffusion and a unit atom: the exactly simulable test mech."""
    return BranchingMechanism(0.0, 1.0, FiniteAtoms(((1.0, 1.0),)))


@pytest.fixture(scope="session")
def se():
    """Subcritical with exponential jump density: phi(lam) = lam + lam^2/(1+lam)."""
    return BranchingMechanism(1.0, 0.0, ExpDensity(1.0, 1.0))


@pytest.fixture(scope="session")
def feller():
    """Purely quadratic: phi(lam) = lam**2."""
    return BranchingMechanism(0.0, 1.0, ZeroMeasure())


@pytest.fixture(scope="session")
def super_h0_false():
    """Supercritical with too little jump mean: phi stays negative."""
    return BranchingMechanism(-0.5, 0.0, ExpDensity(0.1, 10.0))


@pytest.fixture(scope="session")
def super_h0_true():
    """Supercritical with largest root exactly 1."""
    return BranchingMechanism(-0.5, 0.0, ExpDensity(1.0, 1.0))


@pytest.fixture(scope="session")
def tilted():
    """Subcritical exponentially tilted stable (shift of the critical stable)."""
    return BranchingMechanism(0.0, 0.0, StablePower(1.5, 1.0)).shift(0.5)


@pytest.fixture(scope="session")
def tabulated():
    """A smooth bounded-support density given on a grid."""
    import numpy as np

    grid = tuple(np.linspace(0.2, 2.0, 61))
    dens = tuple(float(np.exp(-u)) for u in grid)
    return BranchingMechanism(0.1, 0.3, TabulatedDensity(grid, dens))
