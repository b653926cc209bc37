"""Path simulation of branching processes from their stochastic equation.

Euler-Maruyama handles the drift and diffusion parts; jumps of size >= eps
arrive as per-step Poisson counts with a rate proportional to the current
mass (thinning against the mass indicator in the driving random measure),
with sizes drawn from the normalized tail of the jump measure.  Jumps below
eps are compensated away by default, or folded into the diffusion term in
"diffusion" mode.  Paths of the size-biased limit object (a process with
immigration) and of its exponentially killed variant reuse the same kernel.

The hot loop lives in a compiled extension when available, with a
bit-identical pure-Python fallback selected at import.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterator, Optional

import numpy as np

from ..mechanism import BranchingMechanism, JumpSampler, MechanismError

__all__ = [
    "BACKEND",
    "available_backends",
    "SimConfig",
    "SamplePath",
    "PathStats",
    "EnsembleStats",
    "run_ensemble",
    "ensemble",
    "sample_path",
    "sample_cbi_star",
    "sample_killed_star",
    "STATUS_NAMES",
]

try:
    from . import _kernel as _compiled
except ImportError:  # pragma: no cover - build-environment dependent
    _compiled = None
from . import _kernel_py as _pure

_env_backend = os.environ.get("CBJUMP_BACKEND", "").lower()
if _env_backend in ("python", "pure"):
    _default = _pure
    BACKEND = "python"
elif _compiled is not None:
    _default = _compiled
    BACKEND = "cython"
else:
    if _env_backend in ("cython", "compiled"):
        raise ImportError("compiled kernel requested via CBJUMP_BACKEND but not built")
    _default = _pure
    BACKEND = "python"


def available_backends() -> tuple[str, ...]:
    return ("cython", "python") if _compiled is not None else ("python",)


def _kernel_module(backend: Optional[str]):
    if backend is None:
        return _default
    if backend in ("cython", "compiled"):
        if _compiled is None:
            raise MechanismError("compiled kernel is not available")
        return _compiled
    if backend in ("python", "pure"):
        return _pure
    raise MechanismError(f"unknown backend {backend!r}")


STATUS_NAMES = {0: "horizon", 1: "extinct", 2: "killed", 3: "capped"}


@dataclass(frozen=True)
class SimConfig:
    """Discretization and replication parameters for one simulation run.

    eps = 0 keeps every jump and is only allowed for finite-activity
    measures; x_min = None resolves to 1e-10 times the initial mass.
    """

    dt: float = 1e-3
    horizon: float = 1.0
    eps: float = 0.0
    x_min: Optional[float] = None
    seed: int = 0
    n: int = 1
    marks: tuple[float, ...] = ()
    small_jump_mode: str = "drop"  # "drop" (compensated) or "diffusion"
    cap: float = 1e9
    threads: int = 1

    def __post_init__(self):
        if self.dt <= 0 or self.horizon <= 0:
            raise MechanismError("dt and horizon must be positive")
        if self.eps < 0:
            raise MechanismError("eps must be nonnegative")
        if self.n < 0:
            raise MechanismError("replicate count must be nonnegative")
        if self.small_jump_mode not in ("drop", "diffusion"):
            raise MechanismError("small_jump_mode must be 'drop' or 'diffusion'")
        if any(t <= 0 or t > self.horizon + 1e-12 for t in self.marks):
            raise MechanismError("marks must lie in (0, horizon]")


@dataclass(frozen=True)
class _Plan:
    mp: np.ndarray
    ip: np.ndarray
    btx: np.ndarray
    btp: np.ndarray
    itx: np.ndarray
    itp: np.ndarray
    mark_steps: np.ndarray
    mark_times: tuple[float, ...]
    nsteps: int
    dt: float


_EMPTY = np.zeros(0, dtype=np.float64)

_SAMPLER_KINDS = {
    "none": 0,
    "pareto": 1,
    "shifted_exp": 2,
    "discrete": 3,
    "invcdf": 4,
    "tilted_pareto": 5,
    "gamma2_exp": 6,
}


def _pack_sampler(spec: JumpSampler) -> tuple[int, tuple[float, float, float], np.ndarray, np.ndarray]:
    kind = _SAMPLER_KINDS[spec.kind]
    p = list(spec.params) + [0.0, 0.0, 0.0]
    tx = np.ascontiguousarray(spec.table_x, dtype=np.float64) if spec.table_x is not None else _EMPTY
    tp = np.ascontiguousarray(spec.table_p, dtype=np.float64) if spec.table_p is not None else _EMPTY
    if kind in (3, 4) and len(tx) == 0:
        kind = 0
    return kind, (p[0], p[1], p[2]), tx, tp


def _build_plan(mech: BranchingMechanism, x: float, config: SimConfig, mode: int) -> _Plan:
    if x <= 0:
        raise MechanismError("initial mass must be positive")
    levy = mech.levy
    eps = config.eps
    total = levy.total_mass()
    if eps == 0.0 and math.isinf(total):
        raise MechanismError("eps > 0 is required for an infinite-activity jump measure")
    if eps > 0.0:
        lam_rate = levy.tail_closed(eps)
        m1_kept = levy.mean_tail_closed(eps)
        small_m2 = levy.second_moment_below(eps)
    else:
        lam_rate = total
        m1_kept = levy.total_mean()
        small_m2 = 0.0
    beta_eff = mech.beta + (0.5 * small_m2 if config.small_jump_mode == "diffusion" else 0.0)
    drift = mech.alpha + m1_kept
    nsteps = max(1, int(round(config.horizon / config.dt)))
    dt = config.horizon / nsteps
    if drift * dt > 0.5:
        raise MechanismError(
            f"dt too coarse: (alpha + kept jump mean) * dt = {drift * dt:.3g} > 0.5"
        )
    bkind, bp, btx, btp = _pack_sampler(levy.sampler_spec(eps) if lam_rate > 0 else JumpSampler("none"))
    imm_rate = 0.0
    imm_drift = 0.0
    ikind, ip_, itx, itp = 0, (0.0, 0.0, 0.0), _EMPTY, _EMPTY
    kill_rate = 0.0
    if mode >= 1:
        imm_rate = m1_kept
        # immigration is a subordinator: dropped small jumps are replaced by
        # their mean inflow, on top of the continuous immigration drift
        imm_drift = 2.0 * mech.beta + levy.second_moment_below(eps)
        ikind, ip_, itx, itp = _pack_sampler(
            levy.imm_sampler_spec(eps) if imm_rate > 0 else JumpSampler("none")
        )
    if mode == 2:
        kill_rate = mech.alpha
    x_min = config.x_min if config.x_min is not None else 1e-10 * x
    mark_steps = []
    mark_times = []
    for t in config.marks:
        step = min(max(1, int(round(t / dt))), nsteps)
        mark_steps.append(step)
        mark_times.append(step * dt)
    order = np.argsort(mark_steps, kind="stable")
    mark_steps = np.asarray([mark_steps[i] for i in order], dtype=np.int64)
    mark_times = tuple(mark_times[i] for i in order)
    mp = np.array(
        [
            x,
            dt,
            drift,
            beta_eff,
            lam_rate,
            imm_drift,
            imm_rate,
            x_min,
            config.cap,
            kill_rate,
            bp[0],
            bp[1],
            bp[2],
            ip_[0],
            ip_[1],
            ip_[2],
        ],
        dtype=np.float64,
    )
    ip = np.array([nsteps, len(mark_steps), mode, bkind, ikind], dtype=np.int64)
    return _Plan(mp, ip, btx, btp, itx, itp, mark_steps, mark_times, nsteps, dt)


@dataclass(frozen=True)
class EnsembleStats:
    """Per-replicate summary statistics of an ensemble, as flat arrays.

    ``marks`` holds the realized mark times (snapped to the step grid);
    x_at / sigma_at / supjump_at have one column per mark.  Infinite entries
    flag replicates that were killed or hit the blow-up cap.
    """

    marks: tuple[float, ...]
    x_at: np.ndarray
    sigma_at: np.ndarray
    supjump_at: np.ndarray
    height: np.ndarray
    width: np.ndarray
    sigma: np.ndarray
    supjump: np.ndarray
    njumps: np.ndarray
    status: np.ndarray
    x_end: np.ndarray
    t_end: np.ndarray
    dt: float
    seed: int
    mode: int

    @property
    def n(self) -> int:
        return len(self.height)

    def mark_column(self, t: float, which: str = "x") -> np.ndarray:
        arr = {"x": self.x_at, "sigma": self.sigma_at, "supjump": self.supjump_at}[which]
        for j, m in enumerate(self.marks):
            if abs(m - t) <= self.dt:
                return arr[:, j]
        raise MechanismError(f"no mark recorded near t = {t}")


_NO_PATHS = np.zeros((0, 0), dtype=np.float64)
_NO_COUNTS = np.zeros(0, dtype=np.float64)


def _mode_index(mech: BranchingMechanism, mode: str) -> int:
    mode_idx = {"cb": 0, "cbi": 1, "killed": 2}[mode]
    if mode_idx >= 1 and mech.alpha < 0:
        raise MechanismError("the size-biased limit object needs alpha >= 0")
    if mode_idx == 2 and mech.alpha <= 0:
        raise MechanismError("exponential killing needs alpha > 0")
    return mode_idx


def run_ensemble(
    mech: BranchingMechanism,
    x: float,
    config: SimConfig,
    mode: str = "cb",
    backend: Optional[str] = None,
    offset: int = 0,
) -> EnsembleStats:
    """Simulate config.n independent replicates and collect their statistics.

    Deterministic in (seed, n, config): replicate offset + i always consumes
    the stream derived from (seed, offset + i), regardless of chunking or
    thread count.
    """
    mode_idx = _mode_index(mech, mode)
    plan = _build_plan(mech, x, config, mode_idx)
    kernel = _kernel_module(backend)
    n = config.n
    nmarks = len(plan.mark_times)
    out_at = np.empty((n, 3 * nmarks), dtype=np.float64)
    out_sc = np.empty((n, 8), dtype=np.float64)

    def run_span(lo: int, hi: int):
        kernel.simulate_chunk(
            plan.mp, plan.ip, plan.btx, plan.btp, plan.itx, plan.itp, plan.mark_steps,
            config.seed & ((1 << 64) - 1), offset + lo,
            out_at[lo:hi], out_sc[lo:hi], _NO_PATHS, _NO_PATHS, _NO_PATHS, _NO_COUNTS,
        )

    if config.threads > 1 and kernel is _compiled and n > 1:
        chunk = max(256, (n + 4 * config.threads - 1) // (4 * config.threads))
        spans = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            list(pool.map(lambda span: run_span(*span), spans))
    else:
        run_span(0, n)
    return EnsembleStats(
        marks=plan.mark_times,
        x_at=out_at[:, :nmarks],
        sigma_at=out_at[:, nmarks : 2 * nmarks],
        supjump_at=out_at[:, 2 * nmarks :],
        height=out_sc[:, 0],
        width=out_sc[:, 1],
        sigma=out_sc[:, 2],
        supjump=out_sc[:, 3],
        njumps=out_sc[:, 4],
        status=out_sc[:, 5],
        x_end=out_sc[:, 6],
        t_end=out_sc[:, 7],
        dt=plan.dt,
        seed=config.seed,
        mode=mode_idx,
    )


@dataclass(frozen=True)
class PathStats:
    """Summary statistics of one replicate."""

    height: float
    width: float
    sigma: float
    supjump: float
    njumps: int
    termination: str
    x_end: float
    t_end: float
    marks: tuple[float, ...] = ()
    x_at: tuple[float, ...] = ()
    sigma_at: tuple[float, ...] = ()
    supjump_at: tuple[float, ...] = ()


def ensemble(
    mech: BranchingMechanism,
    x: float,
    config: SimConfig,
    mode: str = "cb",
    backend: Optional[str] = None,
) -> Iterator[PathStats]:
    """Stream PathStats for config.n replicates (chunked lazily)."""
    chunk = 4096
    done = 0
    while done < config.n:
        m = min(chunk, config.n - done)
        # same global replicate indices as one big run
        sub = replace(config, n=m)
        stats = run_ensemble(mech, x, sub, mode, backend, offset=done)
        for i in range(m):
            yield PathStats(
                height=float(stats.height[i]),
                width=float(stats.width[i]),
                sigma=float(stats.sigma[i]),
                supjump=float(stats.supjump[i]),
                njumps=int(stats.njumps[i]),
                termination=STATUS_NAMES[int(stats.status[i])],
                x_end=float(stats.x_end[i]),
                t_end=float(stats.t_end[i]),
                marks=stats.marks,
                x_at=tuple(stats.x_at[i]),
                sigma_at=tuple(stats.sigma_at[i]),
                supjump_at=tuple(stats.supjump_at[i]),
            )
        done += m


@dataclass(frozen=True)
class SamplePath:
    """One simulated trajectory on the step grid, with its recorded jumps."""

    times: np.ndarray
    values: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    termination: str
    height: float
    width: float
    sigma: float
    supjump: float
    jumps_truncated: bool = False

    @property
    def is_extinct(self) -> bool:
        return self.termination == "extinct"


def _simulate_one_path(mech, x, config, mode, backend, replicate):
    mode_idx = _mode_index(mech, mode)
    plan = _build_plan(mech, x, config, mode_idx)
    kernel = _kernel_module(backend)
    expected = plan.mp[4] * max(x, 1.0) * config.horizon + plan.mp[6] * config.horizon
    jcap = int(min(4 * expected + 1024, 2e6))
    nmarks = len(plan.mark_times)
    out_at = np.empty((1, 3 * nmarks), dtype=np.float64)
    out_sc = np.empty((1, 8), dtype=np.float64)
    xs = np.empty((1, plan.nsteps + 1), dtype=np.float64)
    jt = np.empty((1, jcap), dtype=np.float64)
    jz = np.empty((1, jcap), dtype=np.float64)
    jn = np.empty(1, dtype=np.float64)
    kernel.simulate_chunk(
        plan.mp, plan.ip, plan.btx, plan.btp, plan.itx, plan.itp, plan.mark_steps,
        config.seed & ((1 << 64) - 1), replicate, out_at, out_sc, xs, jt, jz, jn,
    )
    nj = int(jn[0])
    total_jumps = int(out_sc[0, 4])
    times = np.arange(plan.nsteps + 1) * plan.dt
    return SamplePath(
        times=times,
        values=xs[0],
        jump_times=jt[0, :nj].copy(),
        jump_sizes=jz[0, :nj].copy(),
        termination=STATUS_NAMES[int(out_sc[0, 5])],
        height=float(out_sc[0, 0]),
        width=float(out_sc[0, 1]),
        sigma=float(out_sc[0, 2]),
        supjump=float(out_sc[0, 3]),
        jumps_truncated=nj < total_jumps,
    )


def sample_path(
    mech: BranchingMechanism,
    x: float,
    config: SimConfig,
    replicate: int = 0,
    backend: Optional[str] = None,
) -> SamplePath:
    """One branching-process trajectory from the stochastic equation."""
    return _simulate_one_path(mech, x, config, "cb", backend, replicate)


def sample_cbi_star(
    mech: BranchingMechanism,
    x: float,
    config: SimConfig,
    replicate: int = 0,
    backend: Optional[str] = None,
) -> SamplePath:
    """One trajectory of the size-biased limit object (immigration added)."""
    return _simulate_one_path(mech, x, config, "cbi", backend, replicate)


def sample_killed_star(
    mech: BranchingMechanism,
    x: float,
    config: SimConfig,
    replicate: int = 0,
    backend: Optional[str] = None,
) -> SamplePath:
    """The size-biased object killed at an independent exponential time."""
    return _simulate_one_path(mech, x, config, "killed", backend, replicate)
