"""Laplace-exponent flows of a branching mechanism.

Two scalar ODE flows determine every law in this package:

    v-flow   dv/dt = -phi(v),        v_0 = lam      (marginal transform)
    u-flow   du/dt = lam - phi(u),   u_0 = 0        (integrated-mass transform)

plus the lam -> infinity limit of the v-flow (extinction exponent) and the
t -> infinity limit of the u-flow (total-mass transform).  Infinite results
are returned as the explicit marker ``math.inf``, never as an overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .mechanism import (
    BranchingMechanism,
    MechanismError,
    UndeterminedAssumption,
)

__all__ = [
    "INFINITE",
    "FlowSolution",
    "ExtinctionCurve",
    "solve_v",
    "solve_u",
    "vbar",
    "extinction_curve",
    "u_infinity",
]

INFINITE = math.inf

_RTOL = 1e-10
_ATOL = 1e-20


@dataclass(frozen=True)
class FlowSolution:
    """A solved flow on [0, t_max], queryable at any interior time.

    Values are stored on a fine grid together with exact slopes from the
    ODE right-hand side; evaluation uses cubic Hermite interpolation and is
    clamped between the neighbouring grid values, which keeps monotone flows
    monotone.
    """

    mech: BranchingMechanism
    initial: float
    forcing: float  # 0 for the v-flow, lam for the u-flow
    grid: np.ndarray
    values: np.ndarray
    slopes: np.ndarray

    @property
    def t_max(self) -> float:
        return float(self.grid[-1])

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < -1e-12) or np.any(t_arr > self.t_max * (1 + 1e-12)):
            raise MechanismError(f"flow queried outside [0, {self.t_max}]")
        t_arr = np.clip(t_arr, 0.0, self.t_max)
        idx = np.clip(np.searchsorted(self.grid, t_arr, side="right") - 1, 0, len(self.grid) - 2)
        t0, t1 = self.grid[idx], self.grid[idx + 1]
        h = t1 - t0
        s = np.where(h > 0, (t_arr - t0) / np.where(h > 0, h, 1.0), 0.0)
        y0, y1 = self.values[idx], self.values[idx + 1]
        d0, d1 = self.slopes[idx] * h, self.slopes[idx + 1] * h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        out = h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1
        out = np.clip(out, np.minimum(y0, y1), np.maximum(y0, y1))
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out


def _integrate(rhs, y0: float, t_max: float, rtol: float, n_grid: int) -> tuple[np.ndarray, np.ndarray]:
    sol = solve_ivp(
        rhs,
        (0.0, t_max),
        [y0],
        method="RK45",
        rtol=rtol,
        atol=_ATOL,
        dense_output=True,
    )
    if not sol.success:  # pragma: no cover - scalar flows are benign
        raise MechanismError(f"flow integration failed: {sol.message}")
    grid = np.union1d(np.linspace(0.0, t_max, n_grid), sol.t)
    values = sol.sol(grid)[0]
    return grid, values


def solve_v(
    mech: BranchingMechanism,
    lam: float,
    t_max: float,
    rtol: float = _RTOL,
    n_grid: int = 2001,
) -> FlowSolution:
    """Integrate dv/dt = -phi(v) from v_0 = lam over [0, t_max]."""
    if lam < 0 or not math.isfinite(lam):
        raise MechanismError("initial value must be finite and nonnegative")
    if t_max <= 0:
        raise MechanismError("horizon must be positive")
    if lam == 0.0:
        grid = np.linspace(0.0, t_max, 3)
        zero = np.zeros_like(grid)
        return FlowSolution(mech, lam, 0.0, grid, zero, zero)

    def rhs(_t, y):
        return [-mech.phi(max(y[0], 0.0))]

    grid, values = _integrate(rhs, lam, t_max, rtol, n_grid)
    values = np.maximum(values, 0.0)
    slopes = np.array([-mech.phi(v) for v in values])
    return FlowSolution(mech, lam, 0.0, grid, values, slopes)


def solve_u(
    mech: BranchingMechanism,
    lam: float,
    t_max: float,
    rtol: float = _RTOL,
    n_grid: int = 2001,
) -> FlowSolution:
    """Integrate du/dt = lam - phi(u) from u_0 = 0 over [0, t_max].

    Strictly increasing in t for lam > 0; approaches the inverse of phi at
    lam when that inverse exists.
    """
    if lam < 0 or not math.isfinite(lam):
        raise MechanismError("forcing must be finite and nonnegative")
    if t_max <= 0:
        raise MechanismError("horizon must be positive")
    if lam == 0.0:
        grid = np.linspace(0.0, t_max, 3)
        zero = np.zeros_like(grid)
        return FlowSolution(mech, 0.0, 0.0, grid, zero, zero)

    def rhs(_t, y):
        return [lam - mech.phi(max(y[0], 0.0))]

    grid, values = _integrate(rhs, 0.0, t_max, rtol, n_grid)
    values = np.maximum(values, 0.0)
    slopes = np.array([lam - mech.phi(u) for u in values])
    return FlowSolution(mech, 0.0, lam, grid, values, slopes)


def _v_from_large(mech: BranchingMechanism, lam0: float, t: float, rtol: float) -> float:
    """v_t started from a huge level, integrated in log space for stability."""

    def rhs(_t, w):
        v = math.exp(w[0])
        return [-mech.phi(v) / v]

    sol = solve_ivp(rhs, (0.0, t), [math.log(lam0)], method="RK45", rtol=rtol, atol=1e-13)
    if not sol.success:  # pragma: no cover
        raise MechanismError(f"extinction-exponent integration failed: {sol.message}")
    return math.exp(sol.y[0, -1])


def _aitken(v1: float, v2: float, v3: float) -> tuple[float, float]:
    d1, d2 = v2 - v1, v3 - v2
    denom = d2 - d1
    if denom == 0.0:
        return v3, 0.0
    extrap = v3 - d2 * d2 / denom
    ratio = abs(d2 / d1) if d1 != 0 else 0.0
    err_est = abs(extrap - v3) * ratio / max(1.0 - ratio, 1e-3)
    return extrap, err_est


def vbar(
    mech: BranchingMechanism,
    t: float,
    rtol: float = 1e-11,
    agree_rtol: float = 1e-6,
) -> float:
    """Limit of v_t(lam) as lam -> infinity (the extinction exponent).

    Finite exactly when the 1/phi tail integral converges; returns the
    ``INFINITE`` marker otherwise.  Computed from three large starting
    levels with Aitken extrapolation, escalating to larger levels until the
    extrapolation error estimate drops below ``agree_rtol``.
    """
    if t <= 0:
        raise MechanismError("extinction exponent needs t > 0")
    rep = mech.assumptions()
    if rep.h2 is None:
        raise UndeterminedAssumption("cannot decide whether the extinction exponent is finite")
    if not rep.h2:
        return INFINITE
    lam0 = 1e6
    best = None
    for _ in range(4):
        vs = [_v_from_large(mech, lam0 * f, t, rtol) for f in (1.0, 1e2, 1e4)]
        extrap, err = _aitken(*vs)
        best = extrap
        if err <= agree_rtol * max(abs(extrap), 1e-300):
            return extrap
        lam0 *= 1e4
    return best  # pragma: no cover - escalation is enough for supported families


@dataclass(frozen=True)
class ExtinctionCurve:
    """Extinction exponent sampled on a time grid (inf marks divergence)."""

    mech: BranchingMechanism
    grid: np.ndarray
    values: np.ndarray

    def __call__(self, t: float) -> float:
        if math.isinf(self.values[0]):
            return INFINITE
        return float(np.interp(t, self.grid, self.values))


def extinction_curve(mech: BranchingMechanism, ts) -> ExtinctionCurve:
    ts = np.asarray(sorted(ts), dtype=float)
    rep = mech.assumptions()
    if rep.h2 is None:
        raise UndeterminedAssumption("cannot decide whether the extinction exponent is finite")
    if not rep.h2:
        return ExtinctionCurve(mech, ts, np.full_like(ts, INFINITE))
    return ExtinctionCurve(mech, ts, np.array([vbar(mech, t) for t in ts]))


def u_infinity(mech: BranchingMechanism, lam: float) -> float:
    """t -> infinity limit of the u-flow: phi^{-1}(lam), or the inf marker."""
    if lam <= 0:
        raise MechanismError("u_infinity needs lam > 0")
    if not mech.assumptions().h0:
        return INFINITE
    return mech.phi_inverse(lam)
