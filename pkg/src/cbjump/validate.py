"""Monte Carlo validation of the analytic laws and conditioned limits.

Every check produces an :class:`McReport`: a simulation estimate with its
standard error against an analytic (or independently estimated) target,
passing when the deviation stays inside three standard errors plus an
explicit, separately reported discretization-bias allowance.  Statistical
error and scheme bias are thereby kept apart: the laws are exact, the
simulator is not.

Conditioned local limits are validated with a shared ensemble per ladder,
so an event at a higher level conditions on a subset of the replicates of
the lower levels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import maxjump as mj
from .mechanism import (
    CRITICAL,
    SUBCRITICAL,
    BranchingMechanism,
    ExpDensity,
    FiniteAtoms,
    MechanismError,
    StablePower,
    TiltedStable,
    ZeroMeasure,
    open_tail,
)
from .simulate import EnsembleStats, SimConfig, run_ensemble

__all__ = [
    "McReport",
    "ConditioningSpec",
    "Functional",
    "estimate_conditional",
    "weighted_target",
    "convergence_experiment",
    "law_check",
    "LAW_CHECKS",
    "EXPERIMENTS",
    "run_experiment",
    "stable_weighted_functional",
]

_TARGET_SEED_OFFSET = 0x5851F42D4C957F2D


class InsufficientConditioningMass(RuntimeError):
    """The conditioning event was never (or too rarely) realized."""

    def __init__(self, event_count: int, needed: int):
        super().__init__(
            f"insufficient conditioning mass: {event_count} replicates hit the event"
            f" (needed {needed})"
        )
        self.event_count = event_count


@dataclass(frozen=True)
class McReport:
    """One Monte Carlo check: estimate vs target with a tolerance band.

    passes iff |estimate - target| <= 3 * se_comb + bias_allowance * |target|
    where se_comb combines the estimate's and the target's standard errors.
    """

    name: str
    estimate: float
    se: float
    target: float
    z: float
    n: int
    n_conditioned: int
    passed: bool
    bias_allowance: float = 0.05
    target_se: float = 0.0
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "estimate": self.estimate,
            "se": self.se,
            "target": self.target,
            "target_se": self.target_se,
            "z": self.z,
            "n": self.n,
            "n_conditioned": self.n_conditioned,
            "passed": bool(self.passed),
            "bias_allowance": self.bias_allowance,
            "warnings": list(self.warnings),
        }

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (
            f"{flag}  {self.name}: estimate {self.estimate:.6g} +- {self.se:.2g}"
            f" vs target {self.target:.6g} (z = {self.z:+.2f}, n_cond = {self.n_conditioned})"
        )


def _report(name, estimate, se, target, n, n_cond, allowance, target_se=0.0, warnings=()) -> McReport:
    se_comb = math.sqrt(se * se + target_se * target_se)
    diff = estimate - target
    z = 0.0 if diff == 0.0 else (math.copysign(math.inf, diff) if se_comb == 0.0 else diff / se_comb)
    passed = abs(diff) <= 3.0 * se_comb + allowance * abs(target)
    return McReport(
        name, float(estimate), float(se), float(target), float(z), int(n), int(n_cond),
        bool(passed), float(allowance), float(target_se), tuple(warnings),
    )


# ---------------------------------------------------------------------------
# functionals and conditioning events

@dataclass(frozen=True)
class Functional:
    """A bounded path functional evaluated at the mass at a fixed time.

    kinds: "one"; "exp" (lam): e**(-lam * X_t); "indicator_le" (a);
    "poly" (degree, cap): min(X_t**degree, cap).
    Infinite marks (killed or capped replicates) evaluate as the functional's
    limit at infinity.
    """

    kind: str = "one"
    lam: float = 1.0
    level: float = 1.0
    degree: int = 1
    cap: float = 1e6

    def __call__(self, x_t: np.ndarray) -> np.ndarray:
        finite = np.isfinite(x_t)
        safe = np.where(finite, x_t, 0.0)
        if self.kind == "one":
            return np.ones_like(safe)
        if self.kind == "exp":
            return np.where(finite, np.exp(-self.lam * safe), 0.0)
        if self.kind == "indicator_le":
            return np.where(finite, (safe <= self.level).astype(float), 0.0)
        if self.kind == "poly":
            return np.where(finite, np.minimum(safe**self.degree, self.cap), self.cap)
        raise MechanismError(f"unknown functional kind {self.kind!r}")

    def label(self) -> str:
        if self.kind == "exp":
            return f"exp(-{self.lam:g} X_t)"
        if self.kind == "indicator_le":
            return f"1[X_t <= {self.level:g}]"
        if self.kind == "poly":
            return f"min(X_t^{self.degree}, {self.cap:g})"
        return "1"


_EVENT_FIELDS = {
    "maxjump": "supjump",
    "width": "width",
    "totalmass": "sigma",
    "height": "height",
}


@dataclass(frozen=True)
class ConditioningSpec:
    """Condition on one path statistic exceeding a level r."""

    kind: str  # "maxjump" | "width" | "totalmass" | "height"
    r: float
    functional: Functional = Functional("one")
    t: float = 1.0

    def __post_init__(self):
        if self.kind not in _EVENT_FIELDS:
            raise MechanismError(f"unknown conditioning kind {self.kind!r}")

    def event_mask(self, stats: EnsembleStats) -> np.ndarray:
        return getattr(stats, _EVENT_FIELDS[self.kind]) > self.r


def _ratio_estimate(fvals: np.ndarray, mask: np.ndarray) -> tuple[float, float, int]:
    """Ratio estimator E[F 1_E]/P[E] with its delta-method standard error."""
    n = len(fvals)
    w = mask.astype(float)
    y = fvals * w
    wbar = w.mean()
    est = y.mean() / wbar
    resid = y - est * w
    se = math.sqrt(np.mean(resid * resid) / n) / wbar
    return float(est), float(se), int(mask.sum())


def estimate_conditional(
    spec: ConditioningSpec,
    mech: BranchingMechanism,
    x: float,
    config: SimConfig,
    stats: Optional[EnsembleStats] = None,
    min_count: int = 1,
) -> tuple[float, float, int, EnsembleStats]:
    """Conditional expectation of the functional given the exceedance event."""
    if stats is None:
        cfg = config if spec.t in config.marks else _with_mark(config, spec.t)
        stats = run_ensemble(mech, x, cfg)
    mask = spec.event_mask(stats)
    count = int(mask.sum())
    if count < max(min_count, 1):
        raise InsufficientConditioningMass(count, max(min_count, 1))
    fvals = spec.functional(stats.mark_column(spec.t, "x"))
    est, se, n_cond = _ratio_estimate(fvals, mask)
    return est, se, n_cond, stats


def _with_mark(config: SimConfig, t: float) -> SimConfig:
    from dataclasses import replace

    marks = tuple(sorted(set(config.marks) | {t}))
    return replace(config, marks=marks)


# ---------------------------------------------------------------------------
# limit targets

def stable_weighted_functional(gamma: float, c: float, x: float, t: float, lam: float) -> float:
    """(1/x) E[X_t e**(-lam X_t)] for the critical stable mechanism, in closed form.

    The flow has the separable solution v = (lam**(1-gamma) + c (gamma-1) t)
    ** (1/(1-gamma)) and dv/dlam = (v/lam)**gamma, which gives
    (v/lam)**gamma * e**(-x v).
    """
    v = (lam ** (1.0 - gamma) + c * (gamma - 1.0) * t) ** (1.0 / (1.0 - gamma))
    return (v / lam) ** gamma * math.exp(-x * v)


def weighted_target(
    F: Functional,
    t: float,
    mech: BranchingMechanism,
    x: float,
    config: SimConfig,
    weight: str = "size_biased",
    shift_q: float = 0.0,
) -> tuple[float, float, McReport]:
    """Estimate the conditioned-limit functional from an unconditioned ensemble.

    weight "size_biased": e**(alpha t) X_t / x  (the limit of every tail
    conditioning); "sub_probability": X_t / x (the subcritical maximal-jump
    limit, stated through Laplace functionals); "shifted": the change of
    measure X_t e**(q x - q X_t - phi(q) sigma_t) / x onto the shifted
    mechanism.  Returns (estimate, se, weight-mean report); the report checks
    that the raw size-biasing weights have mean one.
    """
    cfg = _with_mark(config, t)
    stats = run_ensemble(mech, x, cfg)
    xt = stats.mark_column(t, "x")
    finite = np.isfinite(xt)
    base = np.where(finite, xt, 0.0) / x
    if weight == "size_biased":
        w = math.exp(mech.alpha * t) * base
    elif weight == "sub_probability":
        w = base
    elif weight == "shifted":
        sig_t = stats.mark_column(t, "sigma")
        phi_q = mech.phi(shift_q) if shift_q >= 0 else _phi_at_negative(mech, shift_q)
        expo = shift_q * x - shift_q * np.where(finite, xt, 0.0) - phi_q * np.where(np.isfinite(sig_t), sig_t, 0.0)
        w = base * np.exp(expo)
    else:
        raise MechanismError(f"unknown weight {weight!r}")
    fv = F(xt)
    vals = w * fv
    est = float(np.mean(vals))
    se = float(np.std(vals) / math.sqrt(len(vals)))
    wsb = math.exp(mech.alpha * t) * base  # size-biased weights always average to one
    wrep = _report(
        "size-biasing weight mean",
        float(np.mean(wsb)),
        float(np.std(wsb) / math.sqrt(len(wsb))),
        1.0,
        len(wsb),
        len(wsb),
        allowance=0.0,
    )
    return est, se, wrep


def _phi_at_negative(mech: BranchingMechanism, q: float) -> float:
    # the shifted mechanism evaluates phi(q + lam) - phi(q), so its value at
    # lam = -q is phi(0) - phi(q) = -phi(q)
    return -mech.shift(q).phi(-q)


# ---------------------------------------------------------------------------
# convergence experiments

_HYPOTHESES: dict[str, Callable[[BranchingMechanism], list[str]]] = {}


def _hyp_maxjump(mech: BranchingMechanism) -> list[str]:
    warns = []
    if mech.classify() not in (CRITICAL, SUBCRITICAL):
        warns.append("maximal-jump conditioning limits are stated for alpha >= 0")
    if math.isfinite(mech.levy.sup_support) and mech.levy.mass_at(mech.levy.sup_support) > 0:
        warns.append("jump measure is bounded with an atom at its supremum; limits need r -> sup along the support")
    return warns


def _hyp_width(mech: BranchingMechanism) -> list[str]:
    warns = []
    stable = mech.beta == 0 and isinstance(mech.levy, StablePower)
    quadratic = mech.beta > 0 and isinstance(mech.levy, ZeroMeasure)
    bounded = math.isfinite(mech.levy.sup_support)
    if mech.classify() != CRITICAL or not (stable or quadratic or bounded):
        warns.append("width conditioning limit is proved for critical bounded-measure or critical stable mechanisms")
    return warns


def _hyp_totalmass(mech: BranchingMechanism) -> list[str]:
    if mech.classify() == CRITICAL and mech.beta == 0 and isinstance(mech.levy, StablePower):
        return []
    if mech.classify() == CRITICAL and mech.beta > 0 and isinstance(mech.levy, ZeroMeasure):
        return []  # quadratic = stable with exponent 2
    return ["total-mass conditioning limit is proved for the critical stable family"]


def _hyp_height(mech: BranchingMechanism) -> list[str]:
    warns = []
    if mech.classify() not in (CRITICAL, SUBCRITICAL):
        warns.append("height conditioning needs alpha >= 0")
    if mech.assumptions().h2 is not True:
        warns.append("height conditioning needs a finite extinction exponent")
    return warns


_HYPOTHESES.update(
    {"maxjump": _hyp_maxjump, "width": _hyp_width, "totalmass": _hyp_totalmass, "height": _hyp_height}
)


def convergence_experiment(
    kind: str,
    mech: BranchingMechanism,
    x: float,
    F: Functional,
    ladder: Sequence[float],
    t: float,
    config: SimConfig,
    target: Optional[float] = None,
    target_mode: str = "auto",
    min_count: int = 20,
    allowance: float = 0.05,
    stats: Optional[EnsembleStats] = None,
) -> list[McReport]:
    """Conditional estimates along a level ladder against the limit target.

    One shared ensemble serves the whole ladder (nested conditioning events);
    pass ``stats`` to reuse an ensemble across experiments.  The target is
    the closed-form stable functional when available, otherwise an
    importance-weighted estimate from an independent ensemble; target_mode
    "sub_probability" / "shifted" select the subcritical and shifted-measure
    weightings.
    """
    warns = tuple(_HYPOTHESES[kind](mech))
    cfg = _with_mark(config, t)
    if stats is None:
        stats = run_ensemble(mech, x, cfg)
    target_se = 0.0
    wrep = None
    if target is None:
        target, target_se, wrep = _limit_target(F, t, mech, x, config, target_mode)
    reports = []
    prev_gap = None
    for r in ladder:
        spec = ConditioningSpec(kind, r, F, t)
        try:
            est, se, n_cond, _ = estimate_conditional(spec, mech, x, cfg, stats=stats, min_count=min_count)
        except InsufficientConditioningMass as exc:
            reports.append(
                _report(
                    f"{kind} > {r:g} | E[{F.label()}]",
                    math.nan,
                    math.nan,
                    target,
                    cfg.n,
                    exc.event_count,
                    allowance,
                    target_se,
                    warns + (str(exc),),
                )
            )
            continue
        gap = abs(est - target)
        extra = ()
        if prev_gap is not None and gap > prev_gap + 3.0 * se:
            extra = ("approach to the limit is not monotone at this level",)
        prev_gap = gap
        reports.append(
            _report(
                f"{kind} > {r:g} | E[{F.label()}]",
                est,
                se,
                target,
                cfg.n,
                n_cond,
                allowance,
                target_se,
                warns + extra,
            )
        )
    if wrep is not None:
        reports.append(wrep)
    return reports


def _limit_target(F, t, mech, x, config, target_mode) -> tuple[float, float, Optional[McReport]]:
    from dataclasses import replace

    tgt_cfg = replace(config, seed=(config.seed + _TARGET_SEED_OFFSET) & ((1 << 64) - 1))
    if target_mode == "auto":
        if (
            F.kind == "exp"
            and mech.beta == 0
            and isinstance(mech.levy, StablePower)
            and mech.alpha == 0
        ):
            lv = mech.levy
            return stable_weighted_functional(lv.gamma, lv.c, x, t, F.lam), 0.0, None
        est, se, wrep = weighted_target(F, t, mech, x, tgt_cfg, weight="size_biased")
        return est, se, wrep
    if target_mode == "sub_probability":
        est, se, wrep = weighted_target(F, t, mech, x, tgt_cfg, weight="sub_probability")
        return est, se, wrep
    if target_mode == "shifted":
        if not isinstance(mech.levy, TiltedStable):
            raise MechanismError("the shifted total-mass limit is implemented for tilted stable mechanisms")
        lv = mech.levy
        q = -lv.theta  # the shift that makes the mechanism critical stable
        if F.kind == "exp":
            return stable_weighted_functional(lv.gamma, lv.c, x, t, F.lam), 0.0, None
        est, se, wrep = weighted_target(F, t, mech, x, tgt_cfg, weight="shifted", shift_q=q)
        return est, se, wrep
    raise MechanismError(f"unknown target mode {target_mode!r}")


# ---------------------------------------------------------------------------
# law checks (analytic value vs plain empirical frequency)

def law_check(
    name: str,
    estimate: float,
    se: float,
    target: float,
    n: int,
    allowance: float = 0.05,
    n_cond: Optional[int] = None,
    warnings: tuple[str, ...] = (),
) -> McReport:
    return _report(name, estimate, se, target, n, n_cond if n_cond is not None else n, allowance, 0.0, warnings)


def _freq(mask: np.ndarray) -> tuple[float, float]:
    p = float(np.mean(mask))
    return p, math.sqrt(max(p * (1.0 - p), 1e-300) / len(mask))


def check_local_max_jump(mech, x, t, r, config, stats=None) -> McReport:
    cfg = _with_mark(config, t)
    stats = stats if stats is not None else run_ensemble(mech, x, cfg)
    p, se = _freq(stats.mark_column(t, "supjump") <= r)
    target = mj.local_max_jump_cdf(mj.JumpLawQuery(mech, x, t, r))
    return law_check(f"P[max jump over (0,{t:g}] <= {r:g}]", p, se, target, stats.n)


def check_global_max_jump(mech, x, r, config, stats=None) -> McReport:
    stats = stats if stats is not None else run_ensemble(mech, x, config)
    p, se = _freq(stats.supjump <= r)
    target = mj.global_max_jump_cdf(mj.JumpLawQuery(mech, x, math.inf, r))
    warns = ()
    alive = float(np.mean(stats.status == 0))
    if alive > 0.01:
        warns = (f"{alive:.1%} of replicates still alive at the horizon; global statistic truncated",)
    return law_check(f"P[max jump <= {r:g}]", p, se, target, stats.n, warnings=warns)


def check_atom_at_zero(mech, x, t, config, stats=None) -> McReport:
    cfg = _with_mark(config, t)
    stats = stats if stats is not None else run_ensemble(mech, x, cfg)
    p, se = _freq(stats.mark_column(t, "supjump") == 0.0)
    target = mj.max_jump_atom_at_zero(mech, x, t)
    return law_check(f"P[no jump by t = {t:g}]", p, se, target, stats.n)


def check_height(mech, x, t, config, stats=None) -> McReport:
    stats = stats if stats is not None else run_ensemble(mech, x, config)
    p, se = _freq(stats.height <= t)
    target = mj.height_cdf(mech, x, t)
    return law_check(f"P[extinct by t = {t:g}]", p, se, target, stats.n)


def check_total_mass(mech, x, lam, config, stats=None) -> McReport:
    stats = stats if stats is not None else run_ensemble(mech, x, config)
    vals = np.exp(-lam * stats.sigma)
    est = float(np.mean(vals))
    se = float(np.std(vals) / math.sqrt(stats.n))
    target = mj.total_mass_laplace(mech, x, lam)
    return law_check(f"E[exp(-{lam:g} sigma)]", est, se, target, stats.n)


def check_width_exact(mech, x, r, config, stats=None) -> McReport:
    stats = stats if stats is not None else run_ensemble(mech, x, config)
    p, se = _freq(stats.width > r)
    rep = mj.width_tail(mech, x, r)
    if rep.exact is None:
        raise MechanismError("no exact width tail for this mechanism")
    return law_check(f"P[width > {r:g}]", p, se, rep.exact, stats.n)


def check_width_bounds(mech, x, r, config, stats=None) -> McReport:
    stats = stats if stats is not None else run_ensemble(mech, x, config)
    p, se = _freq(stats.width > r)
    rep = mj.width_tail(mech, x, r)
    lo = rep.lower if rep.lower is not None else 0.0
    hi = rep.upper
    inside = (p >= lo - 3 * se - 0.05 * lo) and (p <= hi + 3 * se + 0.05 * hi)
    mid = 0.5 * (lo + hi)
    rpt = _report(f"bounds {lo:.6g} <= P[width > {r:g}] <= {hi:.6g}", p, se, mid, stats.n, stats.n, (hi - lo) / max(mid, 1e-300) / 2 + 0.05)
    return McReport(
        rpt.name, rpt.estimate, rpt.se, rpt.target, rpt.z, rpt.n, rpt.n_conditioned,
        bool(inside), rpt.bias_allowance, 0.0, rpt.warnings,
    )


def check_jump_count(mech, x, t, config, stats=None) -> McReport:
    # the recorded jump count spans the whole simulated horizon, so this
    # check always runs its own ensemble cut exactly at t
    from dataclasses import replace

    cfg = replace(config, horizon=t, marks=())
    stats = run_ensemble(mech, x, cfg)
    est = float(np.mean(stats.njumps))
    se = float(np.std(stats.njumps) / math.sqrt(stats.n))
    a = mech.alpha
    integral = t if abs(a) < 1e-12 else (1.0 - math.exp(-a * t)) / a
    target = x * mech.levy.total_mass() * integral
    return law_check(f"mean jump count on (0,{t:g}]", est, se, target, stats.n, allowance=0.0)


def check_first_jump_escape(mech, x, a, config, stats=None) -> McReport:
    """P[no jump in (a, inf), ever] vs the truncated-mechanism inverse."""
    stats = stats if stats is not None else run_ensemble(mech, x, config)
    p, se = _freq(stats.supjump <= a)
    law = mj.first_jump_time_law(mech, x, open_tail(a), 1.0)
    return law_check(f"P[no jump above {a:g}, ever]", p, se, law.p_never, stats.n)


# ---------------------------------------------------------------------------
# named experiments (CLI surface)

def _mech_atoms():
    return BranchingMechanism(0.0, 1.0, FiniteAtoms(((1.0, 1.0),)))


def _mech_stable():
    return BranchingMechanism(0.0, 0.0, StablePower(1.5, 1.0))


def _mech_se():
    return BranchingMechanism(1.0, 0.0, ExpDensity(1.0, 1.0))


def _mech_feller():
    return BranchingMechanism(0.0, 1.0, ZeroMeasure())


def _mech_tilted(theta=0.5):
    return BranchingMechanism(0.0, 0.0, StablePower(1.5, 1.0)).shift(theta)


def exp_global_maxjump_atoms(n=100_000, seed=7, threads=1) -> list[McReport]:
    cfg = SimConfig(dt=1e-3, horizon=60.0, eps=0.0, seed=seed, n=n, threads=threads)
    mech = _mech_atoms()
    stats = run_ensemble(mech, 1.0, cfg)
    return [
        check_global_max_jump(mech, 1.0, 0.5, cfg, stats),
        check_atom_at_zero(mech, 1.0, 1.0, _with_mark(cfg, 1.0)),
    ]


def exp_window_maxjump_atoms(n=100_000, seed=7, threads=1) -> list[McReport]:
    cfg = SimConfig(dt=1e-3, horizon=1.0, eps=0.0, seed=seed, n=n, marks=(1.0,), threads=threads)
    mech = _mech_atoms()
    stats = run_ensemble(mech, 1.0, cfg)
    return [check_local_max_jump(mech, 1.0, 1.0, 0.5, cfg, stats)]


def exp_height_stable(n=100_000, seed=11, threads=1) -> list[McReport]:
    cfg = SimConfig(
        dt=1e-3, horizon=2.0, eps=0.002, seed=seed, n=n, small_jump_mode="diffusion", threads=threads
    )
    mech = _mech_stable()
    return [check_height(mech, 1.0, 2.0, cfg)]


def exp_totalmass_stable(n=50_000, seed=13, threads=1) -> list[McReport]:
    cfg = SimConfig(
        dt=1e-3, horizon=64.0, eps=0.02, seed=seed, n=n, small_jump_mode="diffusion", threads=threads
    )
    mech = _mech_stable()
    return [check_total_mass(mech, 1.0, 8.0, cfg)]


def exp_width_feller(n=100_000, seed=5, threads=1) -> list[McReport]:
    cfg = SimConfig(dt=1e-3, horizon=100.0, eps=0.0, seed=seed, n=n, threads=threads)
    return [check_width_exact(_mech_feller(), 1.0, 4.0, cfg)]


def exp_width_atoms(n=100_000, seed=5, threads=1) -> list[McReport]:
    cfg = SimConfig(dt=1e-3, horizon=100.0, eps=0.0, seed=seed, n=n, threads=threads)
    return [check_width_bounds(_mech_atoms(), 1.0, 9.0, cfg)]


def exp_jump_count(n=200_000, seed=19, threads=1) -> list[McReport]:
    cfg = SimConfig(dt=1e-3, horizon=1.0, eps=0.0, seed=seed, n=n, threads=threads)
    return [check_jump_count(_mech_atoms(), 1.0, 1.0, cfg)]


def stable_ladder_config(n: int, seed: int, threads: int) -> SimConfig:
    """The shared heavy-ensemble configuration for the stable conditioning ladders."""
    return SimConfig(
        dt=2e-3, horizon=300.0, eps=0.05, seed=seed, n=n, marks=(3.0,),
        small_jump_mode="diffusion", threads=threads,
    )


def feasible_level(kind: str, mech: BranchingMechanism, x: float, n: int, subset: int) -> float:
    """Deepest conditioning level whose expected subset size is ``subset``.

    Solved from the analytic exceedance law, so the choice never peeks at
    the simulated sample.
    """
    p = subset / n
    if kind == "maxjump":
        from scipy.optimize import brentq

        f = lambda r: (1.0 - mj.global_max_jump_cdf(mj.JumpLawQuery(mech, x, math.inf, r))) - p
        return float(brentq(f, 1e-3, 1e8, rtol=1e-10))
    if kind == "height":
        from scipy.optimize import brentq

        f = lambda r: (1.0 - mj.height_cdf(mech, x, r)) - p
        return float(brentq(f, 1e-3, 1e7, rtol=1e-10))
    if kind == "totalmass":
        # total mass of the critical stable process is one-sided stable with
        # index a = 1/gamma (transform e**(-x (lam/c)**(1/gamma))), whose tail
        # is P[sigma > r] ~ K r**(-a) / Gamma(1 - a) with K = x c**(-a)
        lv = mech.levy
        if not isinstance(lv, StablePower) or mech.alpha != 0 or mech.beta != 0:
            raise MechanismError("analytic total-mass levels exist for the critical stable family only")
        from scipy.special import gamma as gfn

        a = 1.0 / lv.gamma
        K = x * lv.c ** (-a)
        return float((K / (p * gfn(1.0 - a))) ** (1.0 / a))
    raise MechanismError(f"no analytic level rule for {kind!r}")


def _stable_ladder_experiment(kind, ladder, subset, n, seed, threads) -> list[McReport]:
    """Shared shape of the three critical-stable conditioning experiments.

    Ladder rungs are approach diagnostics (the limits converge slowly, so the
    shallow ones carry a wide documented allowance); the deepest feasible
    level, solved from the analytic exceedance law at the target subset size,
    is gated at a plain three-standard-error band.
    """
    mech = _mech_stable()
    cfg = stable_ladder_config(n, seed, threads)
    F = Functional("exp", lam=4.0)
    t = 3.0
    stats = run_ensemble(mech, 1.0, _with_mark(cfg, t))
    note = ("finite-depth rung shown for the approach; only the deepest feasible level is gated tightly",)
    reports = []
    for rep in convergence_experiment(kind, mech, 1.0, F, ladder, t, cfg, min_count=100, allowance=0.5, stats=stats):
        reports.append(
            McReport(
                rep.name, rep.estimate, rep.se, rep.target, rep.z, rep.n, rep.n_conditioned,
                rep.passed, rep.bias_allowance, rep.target_se, rep.warnings + note,
            )
        )
    r_star = feasible_level(kind, mech, 1.0, n, subset)
    spec = ConditioningSpec(kind, r_star, F, t)
    est, se, n_cond, _ = estimate_conditional(spec, mech, 1.0, cfg, stats=stats, min_count=subset // 3)
    target = stable_weighted_functional(1.5, 1.0, 1.0, t, 4.0)
    reports.append(
        _report(f"{kind} > {r_star:.4g} (deepest feasible) | E[{F.label()}]",
                est, se, target, n, n_cond, allowance=0.0)
    )
    return reports


def exp_cond_maxjump_critical(n=1_000_000, seed=23, threads=1, ladder=(10.0, 30.0, 100.0)) -> list[McReport]:
    return _stable_ladder_experiment("maxjump", ladder, 650, n, seed, threads)


def exp_cond_totalmass_critical(n=1_000_000, seed=23, threads=1, ladder=(30.0, 100.0, 300.0, 1000.0)) -> list[McReport]:
    return _stable_ladder_experiment("totalmass", ladder, 1500, n, seed, threads)


def exp_cond_height_critical(n=1_000_000, seed=23, threads=1, ladder=(16.0, 32.0, 48.0)) -> list[McReport]:
    return _stable_ladder_experiment("height", ladder, 650, n, seed, threads)


def exp_cond_width_quadratic(n=200_000, seed=29, threads=1, ladder=(8.0, 16.0, 32.0)) -> list[McReport]:
    mech = _mech_feller()
    cfg = SimConfig(dt=1e-3, horizon=100.0, eps=0.0, seed=seed, n=n, marks=(1.0,), threads=threads)
    F = Functional("exp", lam=1.0)
    reports = convergence_experiment("width", mech, 1.0, F, ladder, 1.0, cfg, min_count=200)
    reports.append(check_width_exact(mech, 1.0, 4.0, cfg))
    return reports


def exp_cond_maxjump_subcritical(n=200_000, seed=31, threads=1, ladder=(3.0, 5.0, 6.5)) -> list[McReport]:
    mech = _mech_se()
    cfg = SimConfig(dt=5e-3, horizon=12.0, eps=0.0, seed=seed, n=n, marks=(1.0,), x_min=1e-7, threads=threads)
    # fast-decaying functional: the pre-window-jump contamination scales like
    # e**(-r v_t(lam)), so a larger lam makes feasible ladders conclusive
    F = Functional("exp", lam=4.0)
    return convergence_experiment(
        "maxjump", mech, 1.0, F, ladder, 1.0, cfg, target_mode="sub_probability", min_count=100
    )


def exp_cond_totalmass_shifted(n=200_000, seed=37, threads=1, ladder=(4.0, 8.0, 10.0)) -> list[McReport]:
    """Subcritical total-mass conditioning via the shifted (tilted) mechanism.

    The exponentially tilted stable mechanism shifts back to the critical
    stable one.  Two checks: (a) the change-of-measure identity behind the
    shifted limit, estimated in the direction with bounded weights; (b) the
    conditional ladder against the closed-form shifted-limit target, with a
    generous allowance because this limit is approached at a polynomial rate
    far beyond feasible conditioning depths.
    """
    theta = 0.5
    mech = _mech_tilted(theta)
    x, t, lam = 1.0, 1.0, 4.0
    q = -theta
    phi_q = _phi_at_negative(mech, q)
    crit = _mech_stable()
    from .flows import solve_v

    analytic = math.exp(-x * solve_v(mech, lam, t)(t))  # E[e**(-lam X_t)] under the tilt
    cfg_c = SimConfig(
        dt=1e-3, horizon=t, eps=0.01, seed=seed + 1, n=n, marks=(t,),
        small_jump_mode="diffusion", threads=threads,
    )
    cstats = run_ensemble(crit, x, cfg_c)
    xt = cstats.mark_column(t, "x")
    st = cstats.mark_column(t, "sigma")
    finite = np.isfinite(xt)
    # inverse change of measure: weights e**(-qx + q X_t + phi(q) sigma_t) <= e**(-qx)
    w = np.where(finite, np.exp(-q * x + q * np.where(finite, xt, 0.0) + phi_q * st), 0.0)
    vals = np.where(finite, np.exp(-lam * np.where(finite, xt, 0.0)), 0.0) * w
    ident = law_check(
        "shift identity: E[e^(-4 X_1)] via reweighted critical ensemble",
        float(np.mean(vals)),
        float(np.std(vals) / math.sqrt(len(vals))),
        analytic,
        n,
        allowance=0.02,
    )
    cfg = SimConfig(
        dt=2e-3, horizon=60.0, eps=0.02, seed=seed, n=n, marks=(t,),
        small_jump_mode="diffusion", threads=threads,
    )
    F = Functional("exp", lam=lam)
    ladder_reports = convergence_experiment(
        "totalmass", mech, x, F, ladder, t, cfg, target_mode="shifted",
        min_count=50, allowance=0.5,
    )
    for i, rep in enumerate(ladder_reports):
        ladder_reports[i] = McReport(
            rep.name, rep.estimate, rep.se, rep.target, rep.z, rep.n, rep.n_conditioned,
            rep.passed, rep.bias_allowance, rep.target_se,
            rep.warnings + ("conditioning depth far below the asymptotic regime; approach reported, band widened",),
        )
    return [ident] + ladder_reports


def exp_maxjump_tail_asymptote(n=0, seed=0, threads=1) -> list[McReport]:
    """Analytic-only: subcritical global tail vs its leading asymptote."""
    mech = _mech_se()
    r = 12.0
    q = mj.JumpLawQuery(mech, 1.0, math.inf, r)
    analytic_tail = 1.0 - mj.global_max_jump_cdf(q)
    asym = mj.tail_asymptote(q)
    ratio = analytic_tail / asym.value
    rep = _report(f"analytic tail / asymptote at r = {r:g}", ratio, 0.0, 1.0, 1, 1, 0.15)
    return [rep]


def exp_weights(n=100_000, seed=41, threads=1) -> list[McReport]:
    mech = _mech_stable()
    cfg = SimConfig(
        dt=1e-3, horizon=3.0, eps=0.02, seed=seed, n=n, marks=(3.0,),
        small_jump_mode="diffusion", threads=threads,
    )
    _, _, wrep = weighted_target(Functional("one"), 3.0, mech, 1.0, cfg)
    return [wrep]


EXPERIMENTS: dict[str, Callable[..., list[McReport]]] = {
    "global-maxjump-atoms": exp_global_maxjump_atoms,
    "window-maxjump-atoms": exp_window_maxjump_atoms,
    "height-stable": exp_height_stable,
    "totalmass-stable": exp_totalmass_stable,
    "width-feller": exp_width_feller,
    "width-atoms": exp_width_atoms,
    "jump-count": exp_jump_count,
    "cond-maxjump-critical": exp_cond_maxjump_critical,
    "cond-totalmass-critical": exp_cond_totalmass_critical,
    "cond-height-critical": exp_cond_height_critical,
    "cond-width-quadratic": exp_cond_width_quadratic,
    "cond-maxjump-subcritical": exp_cond_maxjump_subcritical,
    "cond-totalmass-shifted": exp_cond_totalmass_shifted,
    "maxjump-tail-asymptote": exp_maxjump_tail_asymptote,
    "weights": exp_weights,
}

LAW_CHECKS = {
    "local_max_jump": check_local_max_jump,
    "global_max_jump": check_global_max_jump,
    "atom_at_zero": check_atom_at_zero,
    "height": check_height,
    "total_mass": check_total_mass,
    "width_exact": check_width_exact,
    "width_bounds": check_width_bounds,
    "jump_count": check_jump_count,
    "first_jump_escape": check_first_jump_escape,
}


def run_experiment(name: str, n: Optional[int] = None, seed: Optional[int] = None, threads: int = 1) -> list[McReport]:
    if name not in EXPERIMENTS:
        raise MechanismError(f"unknown experiment {name!r}; known: {sorted(EXPERIMENTS)}")
    fn = EXPERIMENTS[name]
    kwargs = {}
    if n is not None:
        kwargs["n"] = n
    if seed is not None:
        kwargs["seed"] = seed
    kwargs["threads"] = threads
    return fn(**kwargs)
