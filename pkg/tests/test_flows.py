import math
import random

import numpy as np
import pytest

from cbjump.flows import INFINITE, extinction_curve, solve_u, solve_v, u_infinity, vbar
from cbjump.mechanism import (
    AssumptionReport,
    BranchingMechanism,
    ExpDensity,
    FiniteAtoms,
    MechanismError,
    UndeterminedAssumption,
    open_tail,
)

from _oracles import rk4, stable_flow, stable_vbar


def test_v_flow_stable_closed_form(stable):
    sol = solve_v(stable, 4.0, 3.0, rtol=1e-11)
    for t in (0.0, 0.5, 1.0, 2.0, 3.0):
        assert sol(t) == pytest.approx(stable_flow(4.0, t), rel=1e-9)
    assert sol(3.0) == pytest.approx(0.25, rel=1e-9)


def test_v_flow_zero_initial(stable):
    sol = solve_v(stable, 0.0, 5.0)
    assert sol(2.0) == 0.0


def test_v_flow_fixed_point_at_root(super_h0_true):
    q = super_h0_true.largest_root()
    sol = solve_v(super_h0_true, q, 4.0)
    for t in (0.5, 2.0, 4.0):
        assert sol(t) == pytest.approx(q, rel=1e-8)


def test_v_flow_monotone_and_dominated(se):
    sol = solve_v(se, 2.0, 5.0)
    ts = np.linspace(0, 5, 41)
    vals = sol(ts)
    assert np.all(np.diff(vals) <= 1e-12)
    assert np.all(vals <= 2.0 + 1e-12)


def test_v_flow_supercritical_expands_towards_root(super_h0_true):
    # below the root the flow increases towards it at rate phi'(q) = 1/4
    sol = solve_v(super_h0_true, 0.2, 60.0)
    assert sol(60.0) == pytest.approx(1.0, rel=1e-5)


def test_semigroup_property(stable, se, atoms):
    rng = random.Random(7)
    for mech in (stable, se, atoms):
        for _ in range(10):
            lam = rng.uniform(0.1, 5.0)
            t, s = rng.uniform(0.05, 2.0), rng.uniform(0.05, 2.0)
            whole = solve_v(mech, lam, t + s)(t + s)
            inner = solve_v(mech, lam, s)(s)
            outer = solve_v(mech, inner, t)(t)
            assert whole == pytest.approx(outer, rel=1e-6)


def test_u_flow_zero(se):
    sol = solve_u(se, 0.0, 3.0)
    assert sol(1.5) == 0.0


def test_u_flow_matches_oracle_rk4(atoms):
    trunc = atoms.truncate(open_tail(0.5))  # phi(u) = u + u^2
    sol = solve_u(trunc, 1.0, 2.0, rtol=1e-11)
    for t, expected in ((0.5, 0.3698063038171566), (1.0, 0.530329756621526), (2.0, 0.6083200584863012)):
        assert sol(t) == pytest.approx(expected, rel=1e-8)
        oracle = rk4(lambda _t, u: 1.0 - (u + u * u), 0.0, t, 20000)
        assert sol(t) == pytest.approx(oracle, rel=1e-8)


def test_u_flow_strictly_increasing(se):
    sol = solve_u(se, 1.0, 10.0)
    ts = np.linspace(0.0, 10.0, 60)
    vals = sol(ts)
    assert np.all(np.diff(vals) > 0)


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_u_lambda_derivative_identity(alpha, t):
    # d u_t / d lam at 0+ = (1 - e^{-alpha t})/alpha, meaning t at alpha = 0
    mech = BranchingMechanism(alpha, 1.0, FiniteAtoms(((1.0, 1.0),)))
    h = 1e-6
    d1 = solve_u(mech, h, t, rtol=1e-11)(t) / h
    d2 = solve_u(mech, 2 * h, t, rtol=1e-11)(t) / (2 * h)
    deriv = 2 * d1 - d2  # Richardson in h
    expected = t if alpha == 0.0 else (1.0 - math.exp(-alpha * t)) / alpha
    assert deriv == pytest.approx(expected, abs=1e-6)


def test_u_flow_converges_to_inverse(se):
    target = se.phi_inverse(1.0)
    vals = [solve_u(se, 1.0, t)(t) for t in (1.0, 10.0, 100.0)]
    assert vals[0] < vals[1] < vals[2] <= target + 1e-9
    assert vals[2] == pytest.approx(target, abs=1e-4)


def test_u_infinity(stable, super_h0_false, atoms):
    assert u_infinity(stable, 8.0) == pytest.approx(4.0, rel=1e-10)
    assert u_infinity(super_h0_false, 1.0) == INFINITE
    trunc = atoms.truncate(open_tail(0.5))
    assert u_infinity(trunc, 1.0) == pytest.approx((math.sqrt(5) - 1) / 2, rel=1e-10)


def test_flow_comparison_under_truncation(se):
    lam = se.levy.tail(1.5)
    uu = solve_u(se, lam, 3.0)(3.0)
    ur = solve_u(se.truncate(open_tail(1.5)), lam, 3.0)(3.0)
    uR = solve_u(se.truncate(open_tail(0.5)), lam, 3.0)(3.0)
    assert uR <= ur + 1e-12
    assert ur <= uu + 1e-12


def test_vbar_stable_closed_form(stable):
    assert vbar(stable, 2.0) == pytest.approx(1.0, rel=1e-6)
    assert vbar(stable, 4.0) == pytest.approx(0.25, rel=1e-6)
    assert vbar(stable, 2.0) == pytest.approx(stable_vbar(2.0), rel=1e-6)


def test_vbar_feller(feller):
    # dv/dt = -v^2 from infinity: vbar_t = 1/t
    assert vbar(feller, 2.0) == pytest.approx(0.5, rel=1e-6)


def test_vbar_infinite_marker():
    mech = BranchingMechanism(1.0, 0.0, FiniteAtoms(((1.0, 1.0),)))
    assert vbar(mech, 1.0) == INFINITE


def test_vbar_undetermined_raises(se):
    fake = BranchingMechanism(se.alpha, se.beta, se.levy)
    object.__setattr__(
        fake, "_assumptions", AssumptionReport(True, None, None, 0.0, ("forced",))
    )
    with pytest.raises(UndeterminedAssumption):
        vbar(fake, 1.0)


def test_extinction_curve(stable):
    curve = extinction_curve(stable, [1.0, 2.0, 4.0])
    assert curve.values[1] == pytest.approx(1.0, rel=1e-6)
    assert np.all(np.diff(curve.values) < 0)


def test_flow_query_outside_domain(stable):
    sol = solve_v(stable, 1.0, 1.0)
    with pytest.raises(MechanismError):
        sol(2.0)
    with pytest.raises(MechanismError):
        sol(-0.5)
