"""Branching mechanisms of continuous-state branching processes.

A mechanism is the convex function

    phi(lam) = alpha*lam + beta*lam**2 + integral (e**(-lam*u) - 1 + lam*u) pi(du)

over jump sizes u > 0, where ``alpha`` is the drift, ``beta >= 0`` the
diffusion coefficient and ``pi`` the jump-intensity (Levy) measure with
``integral (u ∧ u²) pi(du) < ∞``.  This module provides the supported
measure families, evaluation and classification of mechanisms, tail
truncation, exponential tilting (shift) and monotone inversion.

Everything here is immutable after construction and safe to share across
threads.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import warnings

import numpy as np
from scipy.integrate import IntegrationWarning, quad as _scipy_quad
from scipy.optimize import brentq
from scipy.special import gamma as gamma_fn

__all__ = [
    "MechanismError",
    "NoInverseError",
    "UndeterminedAssumption",
    "LevyMeasure",
    "StablePower",
    "ExpDensity",
    "FiniteAtoms",
    "TabulatedDensity",
    "ZeroMeasure",
    "TiltedStable",
    "RestrictedMeasure",
    "JumpSampler",
    "JumpRegion",
    "open_tail",
    "closed_tail",
    "full_positive",
    "AssumptionReport",
    "BranchingMechanism",
    "SUBCRITICAL",
    "CRITICAL",
    "SUPERCRITICAL",
    "mechanism_from_config",
    "mechanism_to_config",
]

SUBCRITICAL = "subcritical"
CRITICAL = "critical"
SUPERCRITICAL = "supercritical"

_QUAD_KW = dict(epsabs=1e-12, epsrel=1e-11, limit=200)


def quad(fn, a, b, **kw):
    """scipy.integrate.quad with its advisory warnings silenced.

    Tiny steeply decaying tails trip the QUADPACK heuristics; accuracy is
    governed by the tolerances and checked by the oracle tests instead.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        return _scipy_quad(fn, a, b, **kw)


def _split_tail_quad(fn, r: float, split: float = 1.0) -> float:
    """Quadrature of fn over (r, inf), split at a moderate point so steeply
    decaying integrands with small r do not defeat the infinite-interval rule."""
    if r < split:
        head, _ = quad(fn, r, split, **_QUAD_KW)
        tail, _ = quad(fn, split, np.inf, **_QUAD_KW)
        return head + tail
    val, _ = quad(fn, r, np.inf, **_QUAD_KW)
    return val


class MechanismError(ValueError):
    """Invalid mechanism, measure or argument."""


class NoInverseError(MechanismError):
    """phi has no inverse because it never becomes positive."""


class UndeterminedAssumption(RuntimeError):
    """A numerically undecidable assumption check was required."""


# ---------------------------------------------------------------------------
# jump samplers (plain parameter bundles consumed by the simulation kernel)

@dataclass(frozen=True)
class JumpSampler:
    """Size sampler for a measure restricted to sizes >= eps, normalized.

    kind:
        "none"          no jumps
        "pareto"        params (exponent, eps): size = eps * u**(-1/exponent)
        "shifted_exp"   params (mu, eps):       size = eps - log(u)/mu
        "gamma2_exp"    params (mu, eps):       size = (e1+e2)/mu rejected to >= eps
        "tilted_pareto" params (exponent, theta, eps): pareto proposal,
                        accept with prob exp(-theta*(size-eps))
        "discrete"      table_x sizes, table_p cumulative probabilities
        "invcdf"        table_p quantiles (increasing, 0..1), table_x sizes
    """

    kind: str
    params: tuple = ()
    table_x: Optional[np.ndarray] = None
    table_p: Optional[np.ndarray] = None


def _invcdf_table(tail_fn, lo: float, hi: float, total: float, npts: int = 2049) -> JumpSampler:
    """Numeric inverse CDF on [lo, hi] built from an open-tail function."""
    if total <= 0.0:
        return JumpSampler("none")
    xs = np.linspace(lo, hi, npts)
    cdf = np.array([1.0 - tail_fn(x) / total for x in xs])
    cdf[0] = 0.0
    cdf = np.maximum.accumulate(np.clip(cdf, 0.0, 1.0))
    cdf[-1] = 1.0
    # drop flat spots so interpolation stays well defined
    keep = np.concatenate(([True], np.diff(cdf) > 1e-15))
    return JumpSampler("invcdf", table_p=cdf[keep], table_x=xs[keep])


# ---------------------------------------------------------------------------
# Levy measures

class LevyMeasure(ABC):
    """Jump-intensity measure on (0, infinity).

    Every downstream formula consumes only the tail ``pi((r, inf))``, partial
    first moments, the compensated exponential integral and a size sampler;
    subclasses provide those in closed form where available.
    """

    # --- mass / moment functionals -------------------------------------
    @abstractmethod
    def tail(self, r: float) -> float:
        """pi((r, inf)); may be inf at r = 0 for infinite-activity measures."""

    def mass_at(self, r: float) -> float:
        """Point mass pi({r}); zero except for atomic measures."""
        return 0.0

    def tail_closed(self, r: float) -> float:
        """pi([r, inf)) for r > 0."""
        return self.tail(r) + self.mass_at(r)

    @abstractmethod
    def mean_tail(self, r: float) -> float:
        """integral_(r,inf) u pi(du); may be inf at r = 0."""

    def mean_tail_closed(self, r: float) -> float:
        return self.mean_tail(r) + r * self.mass_at(r)

    def total_mass(self) -> float:
        return self.tail(0.0)

    def total_mean(self) -> float:
        return self.mean_tail(0.0)

    @abstractmethod
    def exp_integral(self, lam: float) -> float:
        """integral (e**(-lam*u) - 1 + lam*u) pi(du), lam >= 0."""

    @abstractmethod
    def exp_integral_deriv(self, lam: float) -> float:
        """integral u (1 - e**(-lam*u)) pi(du), lam >= 0."""

    @abstractmethod
    def exp_moment_tail(self, r: float, lam: float) -> float:
        """integral_(r,inf) e**(-lam*u) pi(du), r > 0."""

    @abstractmethod
    def second_moment_below(self, eps: float) -> float:
        """integral_(0,eps) u**2 pi(du)."""

    # --- structure ------------------------------------------------------
    @property
    @abstractmethod
    def sup_support(self) -> float:
        """Supremum of the support (inf for unbounded measures)."""

    @property
    def small_mean_infinite(self) -> Optional[bool]:
        """Whether integral_(0,1) u pi(du) = inf; None if undecidable."""
        return False

    def atom_sizes(self) -> tuple[float, ...]:
        return ()

    # --- tilting ---------------------------------------------------------
    @property
    def tilt_domain_min(self) -> float:
        """Infimum of admissible tilt parameters (exclusive bound)."""
        return 0.0

    @abstractmethod
    def tilt_drift(self, theta: float) -> float:
        """integral (1 - e**(-theta*u)) u pi(du) for admissible theta."""

    @abstractmethod
    def tilted(self, theta: float) -> "LevyMeasure":
        """Measure e**(-theta*u) pi(du)."""

    def _check_tilt(self, theta: float) -> None:
        if theta < self.tilt_domain_min or (
            theta == self.tilt_domain_min and self.tilt_domain_min != 0.0 and not self._tilt_min_inclusive()
        ):
            raise MechanismError(
                f"tilt parameter {theta} below admissible infimum {self.tilt_domain_min}"
            )

    def _tilt_min_inclusive(self) -> bool:
        return True

    # --- restriction & sampling ------------------------------------------
    def restricted_below(self, cutoff: float, keep_closed: bool) -> "LevyMeasure":
        """Restriction to (0, cutoff] (keep_closed) or (0, cutoff)."""
        return RestrictedMeasure(self, cutoff, keep_closed)

    @abstractmethod
    def sampler_spec(self, eps: float) -> JumpSampler:
        """Sampler for pi restricted to [eps, inf), normalized."""

    def imm_sampler_spec(self, eps: float) -> JumpSampler:
        """Sampler for the size-biased measure u*pi(du) on [eps, inf)."""
        hi = self.sup_support if math.isfinite(self.sup_support) else max(50.0 / max(eps, 1e-6), 1e4)
        total = self.mean_tail_closed(eps)
        return _invcdf_table(lambda s: self.mean_tail(s), eps, hi, total)

    def _validate_integrability(self) -> None:
        m2 = self.second_moment_below(1.0)
        t1 = self.mean_tail(1.0)
        if not (math.isfinite(m2) and math.isfinite(t1)) or m2 < 0 or t1 < 0:
            raise MechanismError("measure fails integral (u ∧ u²) pi(du) < ∞")


@dataclass(frozen=True)
class StablePower(LevyMeasure):
    """Density c*gamma*(gamma-1)/Γ(2-gamma) * u**(-1-gamma) on (0, inf).

    Normalized so the compensated exponential integral equals c*lam**gamma.
    Requires gamma in (1, 2) and c > 0.
    """

    gamma: float
    c: float = 1.0

    def __post_init__(self):
        if not (1.0 < self.gamma < 2.0):
            raise MechanismError("stable exponent must lie in (1, 2)")
        if self.c <= 0:
            raise MechanismError("stable scale c must be positive")

    @property
    def coeff(self) -> float:
        return self.c * self.gamma * (self.gamma - 1.0) / gamma_fn(2.0 - self.gamma)

    def tail(self, r):
        if r <= 0.0:
            return math.inf
        return self.coeff / self.gamma * r ** (-self.gamma)

    def mean_tail(self, r):
        if r <= 0.0:
            return math.inf
        return self.coeff / (self.gamma - 1.0) * r ** (1.0 - self.gamma)

    def exp_integral(self, lam):
        return self.c * lam ** self.gamma

    def exp_integral_deriv(self, lam):
        return self.c * self.gamma * lam ** (self.gamma - 1.0) if lam > 0 else 0.0

    def exp_moment_tail(self, r, lam):
        if lam == 0.0:
            return self.tail(r)
        return self.coeff * _split_tail_quad(
            lambda u: u ** (-1.0 - self.gamma) * math.exp(-lam * u), r
        )

    def second_moment_below(self, eps):
        if eps <= 0.0:
            return 0.0
        return self.coeff * eps ** (2.0 - self.gamma) / (2.0 - self.gamma)

    @property
    def sup_support(self):
        return math.inf

    @property
    def small_mean_infinite(self):
        return True

    def tilt_drift(self, theta):
        self._check_tilt(theta)
        return self.c * self.gamma * theta ** (self.gamma - 1.0) if theta > 0 else 0.0

    def tilted(self, theta):
        self._check_tilt(theta)
        if theta == 0.0:
            return self
        return TiltedStable(self.gamma, self.c, theta)

    def sampler_spec(self, eps):
        return JumpSampler("pareto", (self.gamma, eps))

    def imm_sampler_spec(self, eps):
        return JumpSampler("pareto", (self.gamma - 1.0, eps))


@dataclass(frozen=True)
class ExpDensity(LevyMeasure):
    """Density rho*mu*e**(-mu*u): total mass rho, mean jump 1/mu."""

    rho: float
    mu: float

    def __post_init__(self):
        if self.rho <= 0 or self.mu <= 0:
            raise MechanismError("exp-density parameters must be positive")

    def tail(self, r):
        return self.rho * math.exp(-self.mu * max(r, 0.0))

    def mean_tail(self, r):
        r = max(r, 0.0)
        return self.rho * math.exp(-self.mu * r) * (r + 1.0 / self.mu)

    def exp_integral(self, lam):
        return self.rho * lam * lam / (self.mu * (lam + self.mu))

    def exp_integral_deriv(self, lam):
        return self.rho * (1.0 / self.mu - self.mu / (lam + self.mu) ** 2)

    def exp_moment_tail(self, r, lam):
        return self.rho * self.mu * math.exp(-(lam + self.mu) * r) / (lam + self.mu)

    def second_moment_below(self, eps):
        if eps <= 0.0:
            return 0.0
        m = self.mu
        return self.rho * (2.0 / m**2 - math.exp(-m * eps) * (eps * eps + 2.0 * eps / m + 2.0 / m**2))

    @property
    def sup_support(self):
        return math.inf

    @property
    def tilt_domain_min(self):
        return -self.mu

    def _tilt_min_inclusive(self):
        return False

    def tilt_drift(self, theta):
        self._check_tilt(theta)
        return self.rho * (1.0 / self.mu - self.mu / (theta + self.mu) ** 2)

    def tilted(self, theta):
        self._check_tilt(theta)
        if theta == 0.0:
            return self
        mu2 = self.mu + theta
        return ExpDensity(self.rho * self.mu / mu2, mu2)

    def sampler_spec(self, eps):
        return JumpSampler("shifted_exp", (self.mu, max(eps, 0.0)))

    def imm_sampler_spec(self, eps):
        return JumpSampler("gamma2_exp", (self.mu, max(eps, 0.0)))


@dataclass(frozen=True)
class FiniteAtoms(LevyMeasure):
    """Finitely many atoms (size_i, mass_i), size_i > 0, mass_i > 0."""

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        atoms = tuple(sorted((float(s), float(m)) for s, m in self.atoms))
        if not atoms or any(s <= 0 or m <= 0 for s, m in atoms):
            raise MechanismError("atoms need positive sizes and masses")
        object.__setattr__(self, "atoms", atoms)

    def tail(self, r):
        return sum(m for s, m in self.atoms if s > r)

    def mass_at(self, r):
        return sum(m for s, m in self.atoms if s == r)

    def mean_tail(self, r):
        return sum(s * m for s, m in self.atoms if s > r)

    def exp_integral(self, lam):
        return sum(m * (math.exp(-lam * s) - 1.0 + lam * s) for s, m in self.atoms)

    def exp_integral_deriv(self, lam):
        return sum(m * s * (1.0 - math.exp(-lam * s)) for s, m in self.atoms)

    def exp_moment_tail(self, r, lam):
        return sum(m * math.exp(-lam * s) for s, m in self.atoms if s > r)

    def second_moment_below(self, eps):
        return sum(m * s * s for s, m in self.atoms if s < eps)

    @property
    def sup_support(self):
        return self.atoms[-1][0]

    def atom_sizes(self):
        return tuple(s for s, _ in self.atoms)

    @property
    def tilt_domain_min(self):
        return -math.inf

    def tilt_drift(self, theta):
        return sum((1.0 - math.exp(-theta * s)) * s * m for s, m in self.atoms)

    def tilted(self, theta):
        return FiniteAtoms(tuple((s, m * math.exp(-theta * s)) for s, m in self.atoms))

    def _discrete(self, pairs):
        total = sum(m for _, m in pairs)
        if total <= 0.0:
            return JumpSampler("none")
        sizes = np.array([s for s, _ in pairs])
        cum = np.cumsum([m for _, m in pairs]) / total
        cum[-1] = 1.0
        return JumpSampler("discrete", table_x=sizes, table_p=cum)

    def sampler_spec(self, eps):
        return self._discrete([(s, m) for s, m in self.atoms if s >= eps])

    def imm_sampler_spec(self, eps):
        return self._discrete([(s, s * m) for s, m in self.atoms if s >= eps])


@dataclass(frozen=True)
class TabulatedDensity(LevyMeasure):
    """Piecewise-linear density on a declared support [grid[0], grid[-1]]."""

    grid: tuple[float, ...]
    density: tuple[float, ...]

    def __post_init__(self):
        g = tuple(float(v) for v in self.grid)
        d = tuple(float(v) for v in self.density)
        if len(g) != len(d) or len(g) < 2:
            raise MechanismError("tabulated density needs matching grid/density of length >= 2")
        if any(b <= a for a, b in zip(g, g[1:])) or g[0] < 0 or any(v < 0 for v in d):
            raise MechanismError("tabulated grid must increase and density be nonnegative")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "density", d)
        self._validate_integrability()

    def _f(self, u):
        return float(np.interp(u, self.grid, self.density, left=0.0, right=0.0))

    def _quad(self, fn, lo, hi):
        lo, hi = max(lo, self.grid[0]), min(hi, self.grid[-1])
        if hi <= lo:
            return 0.0
        pts = [p for p in self.grid if lo < p < hi]
        val, _ = quad(fn, lo, hi, points=pts or None, **_QUAD_KW)
        return val

    def tail(self, r):
        return self._quad(self._f, max(r, 0.0), math.inf)

    def mean_tail(self, r):
        return self._quad(lambda u: u * self._f(u), max(r, 0.0), math.inf)

    def exp_integral(self, lam):
        return self._quad(lambda u: (math.exp(-lam * u) - 1.0 + lam * u) * self._f(u), 0.0, math.inf)

    def exp_integral_deriv(self, lam):
        return self._quad(lambda u: u * (1.0 - math.exp(-lam * u)) * self._f(u), 0.0, math.inf)

    def exp_moment_tail(self, r, lam):
        return self._quad(lambda u: math.exp(-lam * u) * self._f(u), r, math.inf)

    def second_moment_below(self, eps):
        return self._quad(lambda u: u * u * self._f(u), 0.0, eps)

    @property
    def sup_support(self):
        return self.grid[-1]

    @property
    def small_mean_infinite(self):
        # a finite table cannot witness a singularity at 0; stay agnostic
        return None if self.grid[0] == 0.0 else False

    @property
    def tilt_domain_min(self):
        return -math.inf

    def tilt_drift(self, theta):
        return self._quad(lambda u: (1.0 - math.exp(-theta * u)) * u * self._f(u), 0.0, math.inf)

    def tilted(self, theta):
        dens = tuple(f * math.exp(-theta * u) for u, f in zip(self.grid, self.density))
        return TabulatedDensity(self.grid, dens)

    def sampler_spec(self, eps):
        return _invcdf_table(self.tail, max(eps, self.grid[0]), self.grid[-1], self.tail_closed(max(eps, self.grid[0])))


@dataclass(frozen=True)
class ZeroMeasure(LevyMeasure):
    """pi = 0 (purely continuous mechanisms)."""

    def tail(self, r):
        return 0.0

    def mean_tail(self, r):
        return 0.0

    def exp_integral(self, lam):
        return 0.0

    def exp_integral_deriv(self, lam):
        return 0.0

    def exp_moment_tail(self, r, lam):
        return 0.0

    def second_moment_below(self, eps):
        return 0.0

    @property
    def sup_support(self):
        return 0.0

    @property
    def tilt_domain_min(self):
        return -math.inf

    def tilt_drift(self, theta):
        return 0.0

    def tilted(self, theta):
        return self

    def sampler_spec(self, eps):
        return JumpSampler("none")

    def imm_sampler_spec(self, eps):
        return JumpSampler("none")


@dataclass(frozen=True)
class TiltedStable(LevyMeasure):
    """Exponentially tilted stable density: e**(-theta*u) times StablePower.

    Arises from shifting a stable mechanism; stays closed under further
    shifts down to theta = 0 (which recovers StablePower).
    """

    gamma: float
    c: float
    theta: float

    def __post_init__(self):
        if not (1.0 < self.gamma < 2.0) or self.c <= 0 or self.theta <= 0:
            raise MechanismError("tilted stable needs gamma in (1,2), c > 0, theta > 0")

    @property
    def coeff(self) -> float:
        return self.c * self.gamma * (self.gamma - 1.0) / gamma_fn(2.0 - self.gamma)

    def _base_prime(self, y: float) -> float:
        # derivative of c*y**gamma, extended continuously to y = 0
        return self.c * self.gamma * y ** (self.gamma - 1.0) if y > 0 else 0.0

    def tail(self, r):
        if r <= 0.0:
            return math.inf
        return self.coeff * _split_tail_quad(
            lambda u: u ** (-1.0 - self.gamma) * math.exp(-self.theta * u), r
        )

    def mean_tail(self, r):
        if r <= 0.0:
            return math.inf
        return self.coeff * _split_tail_quad(
            lambda u: u ** (-self.gamma) * math.exp(-self.theta * u), r
        )

    def exp_integral(self, lam):
        g, c, th = self.gamma, self.c, self.theta
        return c * (lam + th) ** g - c * th**g - lam * self._base_prime(th)

    def exp_integral_deriv(self, lam):
        return self._base_prime(lam + self.theta) - self._base_prime(self.theta)

    def exp_moment_tail(self, r, lam):
        return self.coeff * _split_tail_quad(
            lambda u: u ** (-1.0 - self.gamma) * math.exp(-(lam + self.theta) * u), r
        )

    def second_moment_below(self, eps):
        if eps <= 0.0:
            return 0.0
        val, _ = quad(lambda u: u ** (1.0 - self.gamma) * math.exp(-self.theta * u), 0.0, eps, **_QUAD_KW)
        return self.coeff * val

    @property
    def sup_support(self):
        return math.inf

    @property
    def small_mean_infinite(self):
        return True

    @property
    def tilt_domain_min(self):
        return -self.theta

    def tilt_drift(self, theta):
        self._check_tilt(theta)
        return self._base_prime(self.theta + theta) - self._base_prime(self.theta)

    def tilted(self, theta):
        self._check_tilt(theta)
        t = self.theta + theta
        if t == 0.0:
            return StablePower(self.gamma, self.c)
        return TiltedStable(self.gamma, self.c, t)

    def sampler_spec(self, eps):
        return JumpSampler("tilted_pareto", (self.gamma, self.theta, eps))

    def imm_sampler_spec(self, eps):
        return JumpSampler("tilted_pareto", (self.gamma - 1.0, self.theta, eps))


class RestrictedMeasure(LevyMeasure):
    """Restriction of a base measure to (0, cutoff] or (0, cutoff)."""

    def __init__(self, base: LevyMeasure, cutoff: float, keep_closed: bool):
        if cutoff <= 0:
            raise MechanismError("restriction cutoff must be positive")
        self.base = base
        self.cutoff = float(cutoff)
        self.keep_closed = bool(keep_closed)

    def _removed_mass(self) -> float:
        return self.base.tail(self.cutoff) if self.keep_closed else self.base.tail_closed(self.cutoff)

    def _removed_mean(self) -> float:
        return (
            self.base.mean_tail(self.cutoff)
            if self.keep_closed
            else self.base.mean_tail_closed(self.cutoff)
        )

    def tail(self, r):
        if r >= self.cutoff:
            return 0.0
        return max(self.base.tail(r) - self._removed_mass(), 0.0)

    def mass_at(self, r):
        if r < self.cutoff or (r == self.cutoff and self.keep_closed):
            return self.base.mass_at(r)
        return 0.0

    def mean_tail(self, r):
        if r >= self.cutoff:
            return 0.0
        return max(self.base.mean_tail(r) - self._removed_mean(), 0.0)

    def exp_integral(self, lam):
        # removed part = int_A e^{-lam u} pi - pi(A) + lam int_A u pi, with the
        # atom at the cutoff joining A exactly when the kept region is open
        exp_mass = self.base.exp_moment_tail(self.cutoff, lam)
        if not self.keep_closed:
            exp_mass += self.base.mass_at(self.cutoff) * math.exp(-lam * self.cutoff)
        removed = exp_mass - self._removed_mass() + lam * self._removed_mean()
        return self.base.exp_integral(lam) - removed

    def exp_integral_deriv(self, lam):
        removed = self._removed_mean() - self._removed_exp_mean(lam)
        return self.base.exp_integral_deriv(lam) - removed

    def _removed_exp_mean(self, lam):
        # integral_removed u e**(-lam u) pi(du), via a small finite-difference-free identity
        val = _split_tail_quad(
            lambda u: u * math.exp(-lam * u) * self._base_density(u), self.cutoff
        ) if self._has_density_tail() else 0.0
        atoms = sum(
            s * m * math.exp(-lam * s)
            for s, m in self._base_atoms()
            if s > self.cutoff or (s == self.cutoff and not self.keep_closed)
        )
        return val + atoms

    def _has_density_tail(self) -> bool:
        return not isinstance(self.base, (FiniteAtoms, ZeroMeasure))

    def _base_density(self, u):
        b = self.base
        if isinstance(b, StablePower):
            return b.coeff * u ** (-1.0 - b.gamma)
        if isinstance(b, TiltedStable):
            return b.coeff * u ** (-1.0 - b.gamma) * math.exp(-b.theta * u)
        if isinstance(b, ExpDensity):
            return b.rho * b.mu * math.exp(-b.mu * u)
        if isinstance(b, TabulatedDensity):
            return b._f(u)
        raise MechanismError("restriction of an unsupported base measure")

    def _base_atoms(self):
        if isinstance(self.base, FiniteAtoms):
            return self.base.atoms
        return ()

    def exp_moment_tail(self, r, lam):
        if r >= self.cutoff:
            return 0.0
        kept_removed = (
            self.base.exp_moment_tail(self.cutoff, lam)
            + (0.0 if self.keep_closed else self.base.mass_at(self.cutoff) * math.exp(-lam * self.cutoff))
        )
        return self.base.exp_moment_tail(r, lam) - kept_removed

    def second_moment_below(self, eps):
        val = self.base.second_moment_below(min(eps, self.cutoff))
        if self.keep_closed and eps > self.cutoff:
            val += self.base.mass_at(self.cutoff) * self.cutoff * self.cutoff
        return val

    @property
    def sup_support(self):
        return min(self.base.sup_support, self.cutoff)

    @property
    def small_mean_infinite(self):
        return self.base.small_mean_infinite

    def atom_sizes(self):
        return tuple(
            s
            for s in self.base.atom_sizes()
            if s < self.cutoff or (s == self.cutoff and self.keep_closed)
        )

    @property
    def tilt_domain_min(self):
        return -math.inf

    def tilt_drift(self, theta):
        return self.base.tilt_drift(theta) - self._removed_tilt_drift(theta)

    def _removed_tilt_drift(self, theta):
        val = 0.0
        if self._has_density_tail():
            val = _split_tail_quad(
                lambda u: (1.0 - math.exp(-theta * u)) * u * self._base_density(u), self.cutoff
            )
        val += sum(
            (1.0 - math.exp(-theta * s)) * s * m
            for s, m in self._base_atoms()
            if s > self.cutoff or (s == self.cutoff and not self.keep_closed)
        )
        return val

    def tilted(self, theta):
        return RestrictedMeasure(self.base.tilted(theta), self.cutoff, self.keep_closed)

    def sampler_spec(self, eps):
        if isinstance(self.base, FiniteAtoms):
            pairs = [(s, m) for s, m in self.base.atoms if s >= eps and (s < self.cutoff or (s == self.cutoff and self.keep_closed))]
            return self.base._discrete(pairs)
        return _invcdf_table(self.tail, eps, self.cutoff, self.tail_closed(eps))

    def imm_sampler_spec(self, eps):
        if isinstance(self.base, FiniteAtoms):
            pairs = [(s, s * m) for s, m in self.base.atoms if s >= eps and (s < self.cutoff or (s == self.cutoff and self.keep_closed))]
            return self.base._discrete(pairs)
        return _invcdf_table(self.mean_tail, eps, self.cutoff, self.mean_tail_closed(eps))

    def __repr__(self):
        br = "]" if self.keep_closed else ")"
        return f"RestrictedMeasure({self.base!r}, (0, {self.cutoff}{br})"


# ---------------------------------------------------------------------------
# truncation regions

@dataclass(frozen=True)
class JumpRegion:
    """A tail region of jump sizes: (r, inf), [r, inf) or all of (0, inf)."""

    kind: str  # "open_tail" | "closed_tail" | "full_positive"
    r: float = 0.0

    def mass(self, levy: LevyMeasure) -> float:
        if self.kind == "open_tail":
            return levy.tail(self.r)
        if self.kind == "closed_tail":
            return levy.tail_closed(self.r)
        return levy.total_mass()

    def mean(self, levy: LevyMeasure) -> float:
        if self.kind == "open_tail":
            return levy.mean_tail(self.r)
        if self.kind == "closed_tail":
            return levy.mean_tail_closed(self.r)
        return levy.total_mean()


def open_tail(r: float) -> JumpRegion:
    if r <= 0:
        raise MechanismError("tail level must be positive")
    return JumpRegion("open_tail", r)


def closed_tail(r: float) -> JumpRegion:
    if r <= 0:
        raise MechanismError("tail level must be positive")
    return JumpRegion("closed_tail", r)


def full_positive() -> JumpRegion:
    return JumpRegion("full_positive")


# ---------------------------------------------------------------------------
# assumption report

@dataclass(frozen=True)
class AssumptionReport:
    """Flags for the three standing assumptions.

    h0: phi eventually positive (inverse exists).
    h1: infinite small-jump variation or beta > 0 (excursions well defined).
    h2: integral of 1/phi at infinity converges (finite extinction exponent).
    h1/h2 may be None when numerically undecidable.
    largest_root is the biggest zero of phi (None when h0 fails).
    """

    h0: bool
    h1: Optional[bool]
    h2: Optional[bool]
    largest_root: Optional[float]
    notes: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# branching mechanism

@dataclass(frozen=True)
class BranchingMechanism:
    """Drift alpha, diffusion beta >= 0 and a Levy measure."""

    alpha: float
    beta: float
    levy: LevyMeasure

    def __post_init__(self):
        if self.beta < 0:
            raise MechanismError("beta must be nonnegative")
        if self.beta == 0 and self.alpha == 0 and isinstance(self.levy, ZeroMeasure):
            raise MechanismError("the trivial mechanism phi = 0 is excluded")
        object.__setattr__(self, "_assumptions", None)

    # --- evaluation -----------------------------------------------------
    def phi(self, lam: float) -> float:
        if not (lam >= 0) or math.isinf(lam):
            raise MechanismError(f"phi requires finite lam >= 0, got {lam}")
        return self.alpha * lam + self.beta * lam * lam + self.levy.exp_integral(lam)

    def phi_prime(self, lam: float) -> float:
        if not (lam >= 0) or math.isinf(lam):
            raise MechanismError(f"phi_prime requires finite lam >= 0, got {lam}")
        return self.alpha + 2.0 * self.beta * lam + self.levy.exp_integral_deriv(lam)

    def classify(self) -> str:
        if self.alpha > 0:
            return SUBCRITICAL
        if self.alpha == 0:
            return CRITICAL
        return SUPERCRITICAL

    # --- assumptions -----------------------------------------------------
    def assumptions(self, h2_cap: float = 1e6) -> AssumptionReport:
        cached = getattr(self, "_assumptions", None)
        if cached is not None:
            return cached
        notes = []
        h0 = self._check_h0()
        h1 = True if self.beta > 0 else self.levy.small_mean_infinite
        if h1 is None:
            notes.append("h1 undetermined: tabulated density reaching 0 cannot prove an infinite small-jump mean")
        q = self._largest_root() if h0 else None
        h2 = self._check_h2(h0, q, h2_cap, notes)
        if h2 is True and h1 is None:
            h1 = True  # h2 implies h1
        rep = AssumptionReport(h0, h1, h2, q, tuple(notes))
        object.__setattr__(self, "_assumptions", rep)
        return rep

    def _check_h0(self) -> bool:
        if self.alpha >= 0 or self.beta > 0:
            return True
        return self.levy.total_mean() > -self.alpha

    def _largest_root(self) -> float:
        if self.alpha >= 0:
            return 0.0
        lo = 1e-8
        while self.phi(lo) >= 0.0:  # extremely small positive roots
            lo /= 1e4
            if lo < 1e-280:
                return 0.0
        hi = max(1.0, 2.0 * lo)
        while self.phi(hi) <= 0.0:
            hi *= 2.0
            if hi > 1e300:
                raise NoInverseError("phi never becomes positive")
        return float(brentq(self.phi, lo, hi, xtol=1e-14, rtol=8.9e-16, maxiter=300))

    def _check_h2(self, h0: bool, q: Optional[float], cap: float, notes: list) -> Optional[bool]:
        if not h0:
            return False
        lam = max(1.0, 2.0 * q) if q else 1.0
        for _ in range(200):
            if self.phi(lam) > 0.0:
                break
            lam *= 2.0
        else:
            return False
        # dyadic spans: the increments of integral 1/phi decay geometrically
        # iff phi grows superlinearly; constant increments mean divergence.
        total = 0.0
        increments = []
        while lam < 1e8:
            hi = lam * 2.0
            inc, _ = quad(lambda y: 1.0 / self.phi(y), lam, hi, **_QUAD_KW)
            if not math.isfinite(inc):
                notes.append("h2 undetermined: quadrature of 1/phi failed")
                return None
            total += inc
            increments.append(inc)
            if total > cap:
                return False
            lam = hi
        ratio = increments[-1] / increments[-2] if increments[-2] > 0 else 0.0
        if ratio < 0.99:
            return True
        if ratio <= 1.01:
            return False
        notes.append("h2 undetermined: 1/phi increments did not stabilize")
        return None

    # --- inversion --------------------------------------------------------
    def largest_root(self) -> float:
        rep = self.assumptions()
        if not rep.h0:
            raise NoInverseError("largest root undefined: phi never becomes positive")
        return rep.largest_root

    def phi_inverse(self, y: float) -> float:
        """The unique lam in [q, inf) with phi(lam) = y, for y >= 0."""
        if y < 0:
            raise MechanismError("phi_inverse requires y >= 0")
        q = self.largest_root()
        if y == 0.0:
            return q
        lo = q
        hi = max(2.0 * q, 1.0)
        for _ in range(2100):
            val = self.phi(hi)
            if val >= y:
                break
            lo = hi
            hi *= 2.0
        else:
            raise MechanismError("failed to bracket phi inverse")
        if self.phi(hi) == y:
            return hi
        root = float(
            brentq(lambda lam: self.phi(lam) - y, lo, hi, xtol=1e-14, rtol=8.9e-16, maxiter=300)
        )
        return root

    # --- truncation and shift ----------------------------------------------
    def truncate(self, region: JumpRegion) -> "BranchingMechanism":
        """Mechanism of the process with jumps in the region removed.

        The removed jump mass enters the drift; the Levy measure is restricted
        to the complement of the region.
        """
        if region.kind == "full_positive":
            if not math.isfinite(self.levy.total_mass()):
                raise MechanismError("full truncation requires a finite-activity measure")
            return BranchingMechanism(self.alpha + self.levy.total_mean(), self.beta, ZeroMeasure())
        r = region.r
        keep_closed = region.kind == "open_tail"  # removing (r, inf) keeps (0, r]
        removed_mean = region.mean(self.levy)
        if region.mass(self.levy) == 0.0 and removed_mean == 0.0:
            return self  # nothing above the level
        levy = self.levy.restricted_below(r, keep_closed)
        return BranchingMechanism(self.alpha + removed_mean, self.beta, levy)

    def shift(self, theta: float) -> "BranchingMechanism":
        """Tilted mechanism lam -> phi(theta + lam) - phi(theta)."""
        if theta == 0.0:
            return self
        levy = self.levy.tilted(theta)  # validates the tilt domain
        alpha = self.alpha + 2.0 * self.beta * theta + self.levy.tilt_drift(theta)
        return BranchingMechanism(alpha, self.beta, levy)

    def to_config(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "levy": _levy_to_config(self.levy)}


# ---------------------------------------------------------------------------
# config round-trip

_FAMILIES = {
    "stable_power": lambda p: StablePower(p["gamma"], p.get("c", 1.0)),
    "exp_density": lambda p: ExpDensity(p["rho"], p["mu"]),
    "finite_atoms": lambda p: FiniteAtoms(tuple((a[0], a[1]) for a in p["atoms"])),
    "tabulated": lambda p: TabulatedDensity(tuple(p["grid"]), tuple(p["density"])),
    "zero": lambda p: ZeroMeasure(),
    "tilted_stable": lambda p: TiltedStable(p["gamma"], p["c"], p["theta"]),
}


def _levy_to_config(levy: LevyMeasure) -> dict:
    if isinstance(levy, StablePower):
        return {"family": "stable_power", "params": {"gamma": levy.gamma, "c": levy.c}}
    if isinstance(levy, ExpDensity):
        return {"family": "exp_density", "params": {"rho": levy.rho, "mu": levy.mu}}
    if isinstance(levy, FiniteAtoms):
        return {"family": "finite_atoms", "params": {"atoms": [list(a) for a in levy.atoms]}}
    if isinstance(levy, TabulatedDensity):
        return {"family": "tabulated", "params": {"grid": list(levy.grid), "density": list(levy.density)}}
    if isinstance(levy, ZeroMeasure):
        return {"family": "zero", "params": {}}
    if isinstance(levy, TiltedStable):
        return {"family": "tilted_stable", "params": {"gamma": levy.gamma, "c": levy.c, "theta": levy.theta}}
    raise MechanismError(f"measure {levy!r} has no config form")


def mechanism_from_config(cfg: dict) -> BranchingMechanism:
    """Build a mechanism from {"alpha": .., "beta": .., "levy": {"family": .., "params": ..}}."""
    try:
        levy_cfg = cfg["levy"]
        family = levy_cfg["family"]
        builder = _FAMILIES[family]
        levy = builder(levy_cfg.get("params", {}))
        return BranchingMechanism(float(cfg["alpha"]), float(cfg["beta"]), levy)
    except KeyError as exc:
        raise MechanismError(f"bad mechanism config: missing {exc}") from exc


def mechanism_to_config(mech: BranchingMechanism) -> dict:
    return mech.to_config()
