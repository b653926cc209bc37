"""Closed and semi-closed distributional laws of a branching process.

Maximal-jump CDFs (over a finite window and globally), the first-jump-time
law for a tail region of jump sizes, the atom of the maximal jump at zero,
tail asymptotics, the total-mass transform, the height law, width bounds
and excursion-measure quantities.  All of them are compositions of the
mechanism functionals with the u/v flows of :mod:`cbjump.flows`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

from .flows import INFINITE, solve_u, u_infinity, vbar
from .mechanism import (
    SUPERCRITICAL,
    BranchingMechanism,
    JumpRegion,
    MechanismError,
    ZeroMeasure,
    closed_tail,
    full_positive,
    open_tail,
)

__all__ = [
    "JumpLawQuery",
    "Asymptote",
    "FirstJumpLaw",
    "GlobalMaxJumpLaw",
    "WidthTailReport",
    "ExcursionReport",
    "local_max_jump_cdf",
    "global_max_jump_cdf",
    "global_max_jump_law",
    "max_jump_atom_at_zero",
    "tail_asymptote",
    "global_max_jump_density",
    "first_jump_time_law",
    "total_mass_laplace",
    "height_cdf",
    "height_density",
    "width_tail",
    "excursion_quantities",
]


@dataclass(frozen=True)
class JumpLawQuery:
    """One maximal-jump question: initial mass x, window t (or inf), level r.

    boundary "closed" asks P[sup <= r]; "open" asks P[sup < r].
    """

    mech: BranchingMechanism
    x: float
    t: float  # positive, possibly math.inf
    r: float
    boundary: str = "closed"

    def __post_init__(self):
        if self.x <= 0:
            raise MechanismError("initial mass must be positive")
        if self.r <= 0:
            raise MechanismError("jump level must be positive")
        if not self.t > 0:
            raise MechanismError("window must be positive")
        if self.boundary not in ("closed", "open"):
            raise MechanismError("boundary must be 'closed' or 'open'")


def _require_jumps(mech: BranchingMechanism) -> None:
    if isinstance(mech.levy, ZeroMeasure) or mech.levy.total_mass() == 0.0:
        raise MechanismError("maximal-jump laws need a nonzero Levy measure")


def _region_for(query: JumpLawQuery) -> JumpRegion:
    # P[sup <= r] removes jumps in (r, inf); P[sup < r] removes [r, inf)
    return open_tail(query.r) if query.boundary == "closed" else closed_tail(query.r)


def u_truncated(mech: BranchingMechanism, region: JumpRegion, t: float, rtol: float = 1e-10) -> float:
    """u-flow of the truncated mechanism at time t, forced by the removed mass."""
    lam = region.mass(mech.levy)
    if lam == 0.0:
        return 0.0
    trunc = mech.truncate(region)
    return solve_u(trunc, lam, t, rtol=rtol)(t)


def local_max_jump_cdf(query: JumpLawQuery) -> float:
    """P[max jump size over (0, t] <= r] (or < r for an open boundary)."""
    _require_jumps(query.mech)
    if math.isinf(query.t):
        return global_max_jump_cdf(query)
    region = _region_for(query)
    if region.mass(query.mech.levy) == 0.0:
        return 1.0
    return math.exp(-query.x * u_truncated(query.mech, region, query.t))


def _inverse_truncated(mech: BranchingMechanism, region: JumpRegion) -> float:
    trunc = mech.truncate(region)
    return trunc.phi_inverse(region.mass(mech.levy))


def global_max_jump_cdf(query: JumpLawQuery) -> float:
    """P[max jump size over the whole life <= r] (or < r).

    Zero when phi never becomes positive; for (sub)critical mechanisms the
    formula remains valid when the tail mass vanishes (the CDF is then 1).
    """
    _require_jumps(query.mech)
    mech = query.mech
    region = _region_for(query)
    tail_mass = region.mass(mech.levy)
    if not mech.assumptions().h0:
        return 0.0
    if tail_mass == 0.0 and mech.classify() != SUPERCRITICAL:
        return 1.0
    return math.exp(-query.x * _inverse_truncated(mech, region))


@dataclass(frozen=True)
class GlobalMaxJumpLaw:
    """Full law of the global maximal jump, including its structural atoms.

    For a supercritical mechanism the law always carries an atom at the
    supremum of the measure's support; when phi never becomes positive that
    atom has full mass.
    """

    mech: BranchingMechanism
    x: float
    atom_at_zero: float
    atom_at_sup: float
    sup_support: float

    def cdf(self, r: float, boundary: str = "closed") -> float:
        return global_max_jump_cdf(JumpLawQuery(self.mech, self.x, math.inf, r, boundary))


def global_max_jump_law(mech: BranchingMechanism, x: float) -> GlobalMaxJumpLaw:
    _require_jumps(mech)
    if x <= 0:
        raise MechanismError("initial mass must be positive")
    atom0 = max_jump_atom_at_zero(mech, x, math.inf)
    sup = mech.levy.sup_support
    if mech.classify() == SUPERCRITICAL:
        rep = mech.assumptions()
        atom_sup = 1.0 - math.exp(-x * rep.largest_root) if rep.h0 else 1.0
    else:
        atom_sup = 0.0 if math.isinf(sup) else _atom_at_finite_sup(mech, x, sup)
    return GlobalMaxJumpLaw(mech, x, atom0, atom_sup, sup)


def _atom_at_finite_sup(mech: BranchingMechanism, x: float, sup: float) -> float:
    if mech.levy.mass_at(sup) == 0.0:
        return 0.0
    below = global_max_jump_cdf(JumpLawQuery(mech, x, math.inf, sup, "open"))
    at_or_below = global_max_jump_cdf(JumpLawQuery(mech, x, math.inf, sup, "closed"))
    return at_or_below - below


def max_jump_atom_at_zero(mech: BranchingMechanism, x: float, t: float) -> float:
    """P[no jump at all over (0, t]] (t may be inf).

    Zero for infinite-activity measures; otherwise governed by the fully
    truncated mechanism (all jump mass moved into the drift).
    """
    _require_jumps(mech)
    if x <= 0:
        raise MechanismError("initial mass must be positive")
    total = mech.levy.total_mass()
    if math.isinf(total):
        return 0.0
    region = full_positive()
    if math.isinf(t):
        if not mech.assumptions().h0:
            return 0.0
        return math.exp(-x * _inverse_truncated(mech, region))
    return math.exp(-x * u_truncated(mech, region, t))


@dataclass(frozen=True)
class Asymptote:
    """Leading-order tail behaviour of a maximal-jump law.

    ``coefficient`` multiplies the measure tail pi((r, inf)); ``value`` is
    the asymptote evaluated at the requested level.  ``divergent`` flags the
    regimes where the ratio to the measure tail blows up instead.
    """

    coefficient: float
    value: float
    scope: str  # "local" or "global"
    divergent: bool = False
    note: str = ""


def tail_asymptote(query: JumpLawQuery) -> Asymptote:
    """r -> infinity behaviour of P[max jump > r].

    Local window: x * (1 - e**(-alpha t))/alpha * tail(r)  (x*t at alpha=0).
    Global window: x/alpha * tail(r) for subcritical mechanisms; for
    alpha <= 0 the ratio to tail(r) diverges and is reported as such.
    """
    _require_jumps(query.mech)
    mech = query.mech
    levy = mech.levy
    sup = levy.sup_support
    if math.isfinite(sup) and levy.mass_at(sup) > 0.0:
        raise MechanismError(
            "tail asymptotics need an unbounded measure or an atomless supremum"
        )
    tail_r = levy.tail(query.r)
    if math.isinf(query.t):
        if mech.alpha <= 0:
            return Asymptote(
                math.inf,
                math.inf,
                "global",
                divergent=True,
                note="P[max jump > r] / tail(r) diverges for alpha <= 0",
            )
        coeff = query.x / mech.alpha
        return Asymptote(coeff, coeff * tail_r, "global")
    if abs(mech.alpha) < 1e-12:
        coeff = query.x * query.t
    else:
        coeff = query.x * (1.0 - math.exp(-mech.alpha * query.t)) / mech.alpha
    return Asymptote(coeff, coeff * tail_r, "local")


def global_max_jump_density(mech: BranchingMechanism, x: float, r: float) -> float:
    """Density of the global maximal jump at r > 0, (sub)critical case.

    Requires an absolutely continuous measure.  The CDF exponent (truncated
    mechanism inverted at the tail mass) is nonincreasing in r, so the
    density is x * exp(-x * exponent) * |d exponent / dr|, with the
    derivative taken by central differences.
    """
    _require_jumps(mech)
    if mech.classify() == SUPERCRITICAL:
        raise MechanismError("the maximal-jump density is stated for alpha >= 0")
    if mech.levy.atom_sizes():
        raise MechanismError("the maximal-jump density needs an atomless measure")
    if r <= 0 or x <= 0:
        raise MechanismError("x and r must be positive")
    h = max(1e-5, 1e-5 * r)

    def n(rr: float) -> float:
        return _inverse_truncated(mech, open_tail(rr))

    at_r = n(r)
    dn = (n(r + h) - n(max(r - h, 1e-12))) / (2.0 * h)
    return x * math.exp(-x * at_r) * max(-dn, 0.0)


class FirstJumpLaw(NamedTuple):
    """Law of the first jump with size in a tail region."""

    survival: float  # P[no such jump by time t]
    density: float  # density of the first-jump time at t
    p_never: float  # P[no such jump, ever]


def first_jump_time_law(
    mech: BranchingMechanism, x: float, region: JumpRegion, t: float
) -> FirstJumpLaw:
    """Survival, time density and escape probability of the first jump in a region."""
    if x <= 0:
        raise MechanismError("initial mass must be positive")
    if region.kind == "full_positive":
        raise MechanismError("first-jump law needs a tail region bounded away from 0")
    lam = region.mass(mech.levy)
    if lam == 0.0:
        return FirstJumpLaw(1.0, 0.0, 1.0)
    trunc = mech.truncate(region)
    u_t = solve_u(trunc, lam, t)(t)
    survival = math.exp(-x * u_t)
    density = x * (lam - trunc.phi(u_t)) * survival
    u_inf = u_infinity(trunc, lam)
    p_never = 0.0 if math.isinf(u_inf) else math.exp(-x * u_inf)
    return FirstJumpLaw(survival, density, p_never)


def total_mass_laplace(mech: BranchingMechanism, x: float, lam: float) -> float:
    """E[e**(-lam * integral X dt over the whole life)] = e**(-x phi^{-1}(lam))."""
    if lam <= 0:
        raise MechanismError("transform argument must be positive")
    if x <= 0:
        raise MechanismError("initial mass must be positive")
    inv = u_infinity(mech, lam)
    return 0.0 if math.isinf(inv) else math.exp(-x * inv)


def height_cdf(mech: BranchingMechanism, x: float, t: float) -> float:
    """P[extinction by time t] = e**(-x vbar_t); zero when vbar diverges."""
    if x <= 0 or t <= 0:
        raise MechanismError("x and t must be positive")
    vb = vbar(mech, t)
    return 0.0 if math.isinf(vb) else math.exp(-x * vb)


def height_density(mech: BranchingMechanism, x: float, t: float) -> float:
    """Density of the extinction time: x e**(-x vbar_t) phi(vbar_t)."""
    if x <= 0 or t <= 0:
        raise MechanismError("x and t must be positive")
    vb = vbar(mech, t)
    if math.isinf(vb):
        return 0.0
    return x * math.exp(-x * vb) * mech.phi(vb)


@dataclass(frozen=True)
class WidthTailReport:
    """Bounds and known exact values for P[running supremum of mass > r]."""

    upper: float
    lower: Optional[float] = None
    exact: Optional[float] = None
    asymptote: Optional[float] = None


def width_tail(mech: BranchingMechanism, x: float, r: float) -> WidthTailReport:
    """Tail of the width (running supremum) of the mass process.

    Upper bound x/r for alpha >= 0; lower bound x/(r+b) in the critical
    bounded-support case (b the measure's support bound, r > x).  Exact
    value x/r for the purely quadratic mechanism with r >= x, and the
    leading asymptote x*(gamma-1)/r in the critical stable case.
    """
    if x <= 0 or r <= 0:
        raise MechanismError("x and r must be positive")
    if mech.alpha < 0:
        raise MechanismError("width bounds are stated for alpha >= 0")
    upper = min(1.0, x / r)
    lower = None
    exact = None
    asymptote = None
    levy = mech.levy
    sup = levy.sup_support
    if mech.alpha == 0 and math.isfinite(sup) and r > x:
        lower = x / (r + sup)
    if mech.alpha == 0 and mech.beta > 0 and isinstance(levy, ZeroMeasure) and r >= x:
        exact = x / r
    from .mechanism import StablePower  # local import avoids a cycle at module load

    if mech.alpha == 0 and mech.beta == 0 and isinstance(levy, StablePower):
        asymptote = x * (levy.gamma - 1.0) / r
    return WidthTailReport(upper, lower, exact, asymptote)


@dataclass(frozen=True)
class ExcursionReport:
    """Maximal-jump quantities under the excursion measure of the process."""

    value: float
    asymptote: float
    scope: str  # "local" or "global"


def excursion_quantities(mech: BranchingMechanism, t: float, r: float) -> ExcursionReport:
    """Excursion-measure mass of {max jump > r}, over (0, t] or globally.

    Consistency with the path law: exp(-x * value) equals the corresponding
    maximal-jump CDF at level r.  Requires the excursion construction to be
    available (beta > 0 or infinite small-jump mean).
    """
    _require_jumps(mech)
    if r <= 0:
        raise MechanismError("jump level must be positive")
    rep = mech.assumptions()
    if rep.h1 is not True:
        raise MechanismError("excursion quantities need the excursion-measure assumption")
    region = open_tail(r)
    tail_mass = mech.levy.tail(r)
    if math.isinf(t):
        if mech.alpha > 0:
            asym = tail_mass / mech.alpha
        else:
            asym = math.inf
        if tail_mass == 0.0:
            return ExcursionReport(0.0, 0.0 if mech.alpha > 0 else math.inf, "global")
        return ExcursionReport(_inverse_truncated(mech, region), asym, "global")
    if abs(mech.alpha) < 1e-12:
        asym = t * tail_mass
    else:
        asym = (1.0 - math.exp(-mech.alpha * t)) / mech.alpha * tail_mass
    if tail_mass == 0.0:
        return ExcursionReport(0.0, asym, "local")
    return ExcursionReport(u_truncated(mech, region, t), asym, "local")
