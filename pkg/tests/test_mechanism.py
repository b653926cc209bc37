import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbjump.mechanism import (
    BranchingMechanism,
    ExpDensity,
    FiniteAtoms,
    MechanismError,
    NoInverseError,
    StablePower,
    TiltedStable,
    ZeroMeasure,
    full_positive,
    mechanism_from_config,
    open_tail,
    closed_tail,
)

from _oracles import bisect, cexp, simpson, stable_expint_above_1, stable_expint_below_1


# --- evaluation ------------------------------------------------------------

def test_phi_stable_closed_form(stable):
    assert stable.phi(4.0) == pytest.approx(8.0, abs=1e-12)
    assert stable.phi(0.0) == 0.0


def test_stable_density_quadrature_reproduces_power():
    # the defining normalization: quadrature of the density against the
    # compensated exponential must reproduce lam**gamma
    for lam in (0.5, 1.0, 4.0):
        full = stable_expint_below_1(lam, 4000) + stable_expint_above_1(lam, 4000)
        assert full == pytest.approx(lam**1.5, rel=1e-8)


def test_phi_exp_density_example(se):
    # exp-density exp-integral is lam^2/(1+lam); with alpha=1: 1 + 1/2
    assert se.phi(1.0) == pytest.approx(1.5, abs=1e-12)
    oracle = simpson(lambda u: cexp(1.0 * u) * math.exp(-u), 0.0, 50.0, 20000)
    assert se.levy.exp_integral(1.0) == pytest.approx(oracle, rel=1e-9)


def test_phi_rejects_bad_lambda(stable):
    with pytest.raises(MechanismError):
        stable.phi(-1.0)
    with pytest.raises(MechanismError):
        stable.phi(math.inf)


def test_phi_prime_examples(stable, se, atoms):
    assert atoms.phi_prime(0.0) == pytest.approx(0.0, abs=1e-14)  # alpha at 0
    assert se.phi_prime(0.0) == pytest.approx(1.0, abs=1e-14)
    assert stable.phi_prime(4.0) == pytest.approx(3.0, abs=1e-12)
    assert se.phi_prime(1.0) == pytest.approx(1.75, abs=1e-12)


@pytest.mark.parametrize("lam", [0.3, 1.0, 2.5, 7.0])
def test_phi_prime_matches_finite_difference(se, stable, lam):
    h = 1e-6
    for mech in (se, stable):
        fd = (mech.phi(lam + h) - mech.phi(lam - h)) / (2 * h)
        assert mech.phi_prime(lam) == pytest.approx(fd, rel=1e-7, abs=1e-9)


# --- classification and assumptions ----------------------------------------

def test_classify():
    assert BranchingMechanism(0.0, 1.0, ZeroMeasure()).classify() == "critical"
    assert BranchingMechanism(1.0, 0.0, ExpDensity(1, 1)).classify() == "subcritical"
    assert BranchingMechanism(-0.5, 0.0, ExpDensity(1, 1)).classify() == "supercritical"


def test_assumptions_stable(stable):
    rep = stable.assumptions()
    assert rep.h0 and rep.h1 and rep.h2
    assert rep.largest_root == 0.0


def test_assumptions_finite_measure_no_beta():
    mech = BranchingMechanism(1.0, 0.0, FiniteAtoms(((1.0, 1.0),)))
    rep = mech.assumptions()
    assert rep.h0 is True
    assert rep.h1 is False
    assert rep.h2 is False
    assert rep.largest_root == 0.0


def test_assumptions_h0_false(super_h0_false):
    rep = super_h0_false.assumptions()
    # mean jump mass 0.01 cannot beat drift -0.5
    assert super_h0_false.levy.total_mean() == pytest.approx(0.01)
    assert rep.h0 is False and rep.h2 is False
    assert rep.largest_root is None


def test_assumptions_implication_chain(stable, atoms, se, feller, super_h0_true, tabulated):
    for mech in (stable, atoms, se, feller, super_h0_true, tabulated):
        rep = mech.assumptions()
        if rep.h2 is True:
            assert rep.h1 is True
        if rep.h1 is True:
            assert rep.h0 is True


def test_supercritical_root(super_h0_true):
    # phi(lam) = -lam/2 + lam^2/(1+lam) vanishes at lam = 1
    assert super_h0_true.assumptions().h0 is True
    assert super_h0_true.largest_root() == pytest.approx(1.0, abs=1e-12)


def test_h1_undetermined_for_tabulated_touching_zero():
    grid = tuple(np.linspace(0.0, 1.0, 21))
    dens = tuple(1.0 for _ in grid)
    mech = BranchingMechanism(0.5, 0.0, __import__("cbjump.mechanism", fromlist=["TabulatedDensity"]).TabulatedDensity(grid, dens))
    assert mech.assumptions().h1 is None


# --- truncation --------------------------------------------------------------

def test_truncate_atoms_example(atoms):
    trunc = atoms.truncate(open_tail(0.5))
    assert trunc.alpha == pytest.approx(1.0, abs=1e-14)
    assert trunc.beta == 1.0
    assert trunc.levy.total_mass() == pytest.approx(0.0, abs=1e-14)
    for lam in (0.3, 1.0, 2.0):
        assert trunc.phi(lam) == pytest.approx(lam + lam * lam, rel=1e-12)


def test_truncate_above_support_is_identity(atoms, stable):
    assert atoms.truncate(open_tail(2.0)) is atoms
    # unbounded support always truncates
    assert stable.truncate(open_tail(10.0)) is not stable


def test_truncate_se_drift(se):
    trunc = se.truncate(open_tail(1.0))
    # removed mean = int_1^inf u e^{-u} du = 2/e
    assert trunc.alpha == pytest.approx(1.0 + 2.0 * math.exp(-1.0), rel=1e-12)
    oracle = simpson(lambda u: cexp(2.0 * u) * math.exp(-u), 0.0, 1.0, 4000)
    assert trunc.levy.exp_integral(2.0) == pytest.approx(oracle, rel=1e-8)


def test_truncate_full_positive(atoms, stable):
    t = atoms.truncate(full_positive())
    assert t.alpha == pytest.approx(1.0)
    assert isinstance(t.levy, ZeroMeasure)
    with pytest.raises(MechanismError):
        stable.truncate(full_positive())


def test_truncation_dominance(stable, se, atoms):
    # removing a bigger tail adds more drift: phi^(R) >= phi^(r) >= phi
    rng = random.Random(4)
    for mech in (stable, se, atoms):
        R, r = 0.4, 1.3
        big = mech.truncate(open_tail(R))
        small = mech.truncate(open_tail(r))
        for _ in range(20):
            lam = rng.uniform(0.0, 8.0)
            a, b, c = big.phi(lam), small.phi(lam), mech.phi(lam)
            assert a >= b - 1e-10 * max(1, abs(b))
            assert b >= c - 1e-10 * max(1, abs(c))


def test_open_vs_closed_truncation_at_atom(atoms):
    open_t = atoms.truncate(open_tail(1.0))  # removes (1, inf): atom kept
    closed_t = atoms.truncate(closed_tail(1.0))  # removes [1, inf): atom gone
    assert open_t.levy.total_mass() == pytest.approx(1.0)
    assert closed_t.levy.total_mass() == pytest.approx(0.0, abs=1e-14)
    assert closed_t.alpha == pytest.approx(1.0)


# --- shift -------------------------------------------------------------------

def test_shift_identity(se):
    assert se.shift(0.0) is se


def test_shift_quadratic():
    mech = BranchingMechanism(0.0, 1.0, ZeroMeasure())
    shifted = mech.shift(1.0)
    assert shifted.alpha == pytest.approx(2.0)
    assert shifted.beta == 1.0


def test_shift_exp_negative_theta():
    mech = BranchingMechanism(-0.5, 0.0, ExpDensity(1.0, 1.0))
    shifted = mech.shift(-0.5)
    # drift gains int (1 - e^{0.5 a}) a e^{-a} da = 1 - 4 = -3
    assert shifted.alpha == pytest.approx(-3.5, rel=1e-12)
    assert isinstance(shifted.levy, ExpDensity)
    assert shifted.levy.mu == pytest.approx(0.5)
    assert shifted.levy.rho == pytest.approx(2.0)
    with pytest.raises(MechanismError):
        mech.shift(-1.0)  # at the domain edge the tilt integral diverges


def test_shift_matches_phi_translation(se, atoms, stable):
    for mech, theta in ((se, 0.7), (atoms, 1.3), (stable, 0.5)):
        sh = mech.shift(theta)
        for lam in (0.0, 0.4, 1.0, 3.0):
            assert sh.phi(lam) == pytest.approx(mech.phi(theta + lam) - mech.phi(theta), rel=1e-9, abs=1e-11)


def test_shift_composes(se):
    a, b = 0.4, 0.9
    once = se.shift(a + b)
    twice = se.shift(a).shift(b)
    for lam in (0.2, 1.0, 5.0):
        assert twice.phi(lam) == pytest.approx(once.phi(lam), rel=1e-10)


def test_shift_stable_gives_tilted_and_back(stable):
    sh = stable.shift(0.5)
    assert isinstance(sh.levy, TiltedStable)
    assert sh.classify() == "subcritical"
    back = sh.shift(-0.5)
    assert isinstance(back.levy, StablePower)
    for lam in (0.5, 2.0):
        assert back.phi(lam) == pytest.approx(stable.phi(lam), rel=1e-9)
    with pytest.raises(MechanismError):
        stable.shift(-0.1)


def test_shift_criticalizing_gives_critical(tilted):
    # the tms scenario: shifting by the negative root makes alpha vanish
    q = -0.5
    crit = tilted.shift(q)
    assert crit.classify() == "critical"
    assert crit.phi_prime(0.0) == pytest.approx(0.0, abs=1e-12)
    assert crit.phi(0.0) == 0.0


# --- inversion ----------------------------------------------------------------

def test_phi_inverse_examples(stable, atoms):
    assert stable.phi_inverse(8.0) == pytest.approx(4.0, rel=1e-12)
    assert stable.phi_inverse(0.0) == 0.0
    trunc = atoms.truncate(open_tail(0.5))
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    assert trunc.phi_inverse(1.0) == pytest.approx(golden, abs=1e-12)


def test_phi_inverse_requires_h0(super_h0_false):
    with pytest.raises(NoInverseError):
        super_h0_false.phi_inverse(1.0)


def test_phi_inverse_roundtrip(stable, se, super_h0_true):
    rng = random.Random(11)
    for mech in (stable, se, super_h0_true):
        q = mech.largest_root()
        for _ in range(25):
            lam = q + rng.uniform(0.0, 1.0) * (1e3 - q)
            y = mech.phi(lam)
            back = mech.phi_inverse(y)
            assert back == pytest.approx(lam, rel=1e-9)
            assert mech.phi(mech.phi_inverse(y)) == pytest.approx(y, rel=1e-9, abs=1e-12)


def test_phi_inverse_residual_tolerance(se):
    for y in (0.1, 1.0, 123.4):
        lam = se.phi_inverse(y)
        assert abs(se.phi(lam) - y) <= 1e-12 * max(1.0, y)


# --- measure invariants ---------------------------------------------------------

@given(st.floats(min_value=0.0, max_value=50.0), st.floats(min_value=0.0, max_value=50.0))
@settings(max_examples=60, deadline=None)
def test_phi_convexity(a, b):
    mech = BranchingMechanism(0.3, 0.2, ExpDensity(1.5, 2.0))
    mid = mech.phi((a + b) / 2.0)
    assert mid <= (mech.phi(a) + mech.phi(b)) / 2.0 + 1e-9 * (1 + abs(mid))


def test_tail_monotone_to_zero(stable, se, atoms, tabulated):
    for mech in (stable, se, atoms, tabulated):
        levy = mech.levy
        rs = [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 50.0]
        tails = [levy.tail(r) for r in rs]
        assert all(a >= b - 1e-12 for a, b in zip(tails, tails[1:]))
        assert tails[-1] <= 1e-12 or math.isinf(levy.sup_support) and tails[-1] < levy.tail(0.01)


def test_partial_mean_additive(se):
    levy = se.levy
    total = levy.mean_tail(0.2)
    assert total == pytest.approx(
        (levy.mean_tail(0.2) - levy.mean_tail(1.0)) + levy.mean_tail(1.0), rel=1e-12
    )


def test_integrability_guard():
    with pytest.raises(MechanismError):
        StablePower(2.3, 1.0)
    with pytest.raises(MechanismError):
        StablePower(1.5, -1.0)
    with pytest.raises(MechanismError):
        FiniteAtoms(((0.0, 1.0),))
    with pytest.raises(MechanismError):
        BranchingMechanism(0.0, 0.0, ZeroMeasure())  # the trivial mechanism


def test_tilted_stable_functionals_match_quadrature(tilted):
    levy = tilted.levy
    # closed-form exp-integral against the oracle quadrature with tilt
    lam, theta = 2.0, 0.5
    kept = simpson(
        lambda s: 2.0 * levy.coeff * cexp(lam * s * s) * math.exp(-theta * s * s) * s ** (-4.0)
        if s > 0
        else levy.coeff * lam * lam,
        0.0,
        1.0,
        4000,
    )
    tail = simpson(
        lambda s: 2.0
        * levy.coeff
        * (cexp(lam / (s * s)) * math.exp(-theta / (s * s)))
        * s ** (2.0 * 1.5 - 1.0)
        if s > 0
        else 0.0,
        0.0,
        1.0,
        4000,
    )
    assert levy.exp_integral(lam) == pytest.approx(kept + tail, rel=1e-7)


def test_config_roundtrip(stable, se, atoms, feller, tilted):
    for mech in (stable, se, atoms, feller, tilted):
        cfg = mech.to_config()
        back = mechanism_from_config(cfg)
        for lam in (0.0, 0.7, 3.0):
            assert back.phi(lam) == pytest.approx(mech.phi(lam), rel=1e-12)


def test_bad_config():
    with pytest.raises(MechanismError):
        mechanism_from_config({"alpha": 0.0})
