import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from cbjump import maxjump as mj
from cbjump.mechanism import (
    BranchingMechanism,
    ExpDensity,
    FiniteAtoms,
    MechanismError,
    StablePower,
    ZeroMeasure,
)
from cbjump.simulate import (
    BACKEND,
    SimConfig,
    available_backends,
    ensemble,
    run_ensemble,
    sample_cbi_star,
    sample_killed_star,
    sample_path,
)

HAVE_CYTHON = "cython" in available_backends()

STAT_FIELDS = ("x_at", "sigma_at", "supjump_at", "height", "width", "sigma", "supjump", "njumps", "status", "x_end", "t_end")


def _mechs_for_parity(stable, atoms, se, feller, tilted, tabulated):
    return [
        (stable, dict(eps=0.03, small_jump_mode="diffusion")),
        (atoms, dict(eps=0.0)),
        (se, dict(eps=0.0)),
        (feller, dict(eps=0.0)),
        (tilted, dict(eps=0.05, small_jump_mode="diffusion")),
        (tabulated, dict(eps=0.0)),
    ]


@pytest.mark.skipif(not HAVE_CYTHON, reason="compiled kernel unavailable")
def test_backend_bit_parity(stable, atoms, se, feller, tilted, tabulated):
    for mech, kw in _mechs_for_parity(stable, atoms, se, feller, tilted, tabulated):
        cfg = SimConfig(dt=5e-3, horizon=0.5, seed=91, n=48, marks=(0.25, 0.5), **kw)
        a = run_ensemble(mech, 1.0, cfg, backend="cython")
        b = run_ensemble(mech, 1.0, cfg, backend="python")
        for f in STAT_FIELDS:
            assert np.array_equal(getattr(a, f), getattr(b, f)), f"{mech} field {f}"


@pytest.mark.skipif(not HAVE_CYTHON, reason="compiled kernel unavailable")
def test_backend_bit_parity_modes(se, stable):
    cfg = SimConfig(dt=5e-3, horizon=0.5, seed=17, n=32, marks=(0.5,), eps=0.0)
    for mode in ("cbi", "killed"):
        a = run_ensemble(se, 1.0, cfg, mode=mode, backend="cython")
        b = run_ensemble(se, 1.0, cfg, mode=mode, backend="python")
        for f in STAT_FIELDS:
            assert np.array_equal(getattr(a, f), getattr(b, f)), f"{mode} field {f}"
    cfg2 = SimConfig(dt=5e-3, horizon=0.5, seed=17, n=16, marks=(0.5,), eps=0.05, small_jump_mode="diffusion")
    a = run_ensemble(stable, 1.0, cfg2, mode="cbi", backend="cython")
    b = run_ensemble(stable, 1.0, cfg2, mode="cbi", backend="python")
    for f in STAT_FIELDS:
        assert np.array_equal(getattr(a, f), getattr(b, f))


@pytest.mark.skipif(not HAVE_CYTHON, reason="compiled kernel unavailable")
def test_backend_bit_parity_paths(atoms):
    cfg = SimConfig(dt=1e-2, horizon=1.0, seed=3, n=1)
    pa = sample_path(atoms, 1.0, cfg, replicate=5, backend="cython")
    pb = sample_path(atoms, 1.0, cfg, replicate=5, backend="python")
    assert np.array_equal(pa.values, pb.values)
    assert np.array_equal(pa.jump_times, pb.jump_times)
    assert np.array_equal(pa.jump_sizes, pb.jump_sizes)
    assert pa.termination == pb.termination


def test_determinism_and_thread_invariance(atoms):
    cfg1 = SimConfig(dt=2e-3, horizon=1.0, seed=5, n=4000, threads=1)
    cfg2 = SimConfig(dt=2e-3, horizon=1.0, seed=5, n=4000, threads=2)
    a = run_ensemble(atoms, 1.0, cfg1)
    b = run_ensemble(atoms, 1.0, cfg1)
    c = run_ensemble(atoms, 1.0, cfg2)
    for f in STAT_FIELDS:
        assert np.array_equal(getattr(a, f), getattr(b, f))
        assert np.array_equal(getattr(a, f), getattr(c, f))


def test_disjoint_seed_batches_look_independent(atoms):
    cfg1 = SimConfig(dt=2e-3, horizon=1.0, seed=1001, n=20000, threads=2)
    cfg2 = SimConfig(dt=2e-3, horizon=1.0, seed=2002, n=20000, threads=2)
    a = run_ensemble(atoms, 1.0, cfg1).x_end
    b = run_ensemble(atoms, 1.0, cfg2).x_end
    z = (a.mean() - b.mean()) / math.sqrt(a.var() / len(a) + b.var() / len(b))
    assert abs(z) < 4.0


def test_deterministic_decay_without_noise():
    # beta = 0, pi = 0: the dynamics are the exact Euler recursion, no draws
    mech = BranchingMechanism(0.5, 0.0, ZeroMeasure())
    cfg = SimConfig(dt=1e-3, horizon=1.0, seed=0, n=3, marks=(1.0,))
    stats = run_ensemble(mech, 1.0, cfg)
    expected = (1.0 - 0.5 * 1e-3) ** 1000
    assert np.allclose(stats.x_at[:, 0], expected, rtol=1e-12)
    assert np.all(stats.njumps == 0)


def test_mean_mass_identity():
    mech = BranchingMechanism(0.5, 1.0, FiniteAtoms(((1.0, 0.5),)))
    cfg = SimConfig(dt=1e-3, horizon=1.0, seed=42, n=20000, marks=(1.0,), threads=2)
    stats = run_ensemble(mech, 1.0, cfg)
    xt = stats.x_at[:, 0]
    target = math.exp(-0.5)
    z = (xt.mean() - target) / (xt.std() / math.sqrt(len(xt)))
    assert abs(z) < 3.0


def test_jump_count_identity_small(atoms):
    cfg = SimConfig(dt=1e-3, horizon=1.0, seed=7, n=50000, threads=2)
    stats = run_ensemble(atoms, 1.0, cfg)
    se = stats.njumps.std() / math.sqrt(cfg.n)
    assert abs(stats.njumps.mean() - 1.0) < 3 * se + 0.01


def test_nonnegative_and_absorption_permanence(atoms):
    cfg = SimConfig(dt=1e-3, horizon=4.0, seed=11, n=1)
    for rep in range(24):
        path = sample_path(atoms, 0.3, cfg, replicate=rep)
        assert np.all(path.values >= 0.0)
        if path.termination == "extinct":
            k = np.argmax(path.values == 0.0)
            assert np.all(path.values[k:] == 0.0)
            assert path.height <= 4.0


def test_supjump_monotone_in_window(stable):
    cfg = SimConfig(dt=2e-3, horizon=2.0, eps=0.02, seed=13, n=2000, marks=(0.5, 1.0, 2.0), threads=2)
    stats = run_ensemble(stable, 1.0, cfg)
    d = np.diff(stats.supjump_at, axis=1)
    assert np.all(d >= 0.0)
    assert np.all(stats.supjump >= stats.supjump_at[:, -1] - 1e-15)


def test_local_cdf_bias_shrinks_with_dt(atoms):
    # documented dt-bias budget: the coarse grid bias shrinks roughly first order
    analytic = mj.local_max_jump_cdf(mj.JumpLawQuery(atoms, 1.0, 1.0, 0.5))
    errs = {}
    for dt, n in ((1e-2, 200000), (1e-3, 200000)):
        cfg = SimConfig(dt=dt, horizon=1.0, seed=29, n=n, marks=(1.0,), threads=2)
        stats = run_ensemble(atoms, 1.0, cfg)
        p = float(np.mean(stats.supjump_at[:, 0] <= 0.5))
        errs[dt] = p - analytic
        se = math.sqrt(p * (1 - p) / n)
        assert abs(p - analytic) <= 3 * se + 0.05 * analytic
    print(f"dt-bias budget: err(1e-2) = {errs[1e-2]:+.5f}, err(1e-3) = {errs[1e-3]:+.5f}")
    assert abs(errs[1e-3]) <= abs(errs[1e-2])


def test_sigma_trapezoid_dt_stability(se):
    means = []
    for dt in (2e-3, 1e-3):
        cfg = SimConfig(dt=dt, horizon=12.0, seed=31, n=10000, threads=2)
        means.append(run_ensemble(se, 1.0, cfg).sigma.mean())
    assert abs(means[1] - means[0]) / means[1] < 0.01


def test_blowup_cap_flags(stable):
    cfg = SimConfig(
        dt=2e-3, horizon=3.0, eps=0.05, seed=37, n=3000, cap=50.0, marks=(3.0,),
        small_jump_mode="diffusion", threads=2,
    )
    stats = run_ensemble(stable, 1.0, cfg, mode="cbi")
    capped = stats.status == 3
    assert capped.any()
    assert np.all(stats.x_end[capped] > 50.0)
    early = capped & (stats.t_end < 3.0)
    assert np.all(np.isinf(stats.x_at[early, 0]))


def test_config_validation(stable, se):
    with pytest.raises(MechanismError):
        run_ensemble(stable, 1.0, SimConfig(dt=1e-3, horizon=1.0, eps=0.0))  # infinite activity
    with pytest.raises(MechanismError):
        run_ensemble(se, 1.0, SimConfig(dt=0.4, horizon=4.0))  # drift*dt too big
    with pytest.raises(MechanismError):
        SimConfig(dt=1e-3, horizon=1.0, marks=(2.0,))
    with pytest.raises(MechanismError):
        run_ensemble(se, -1.0, SimConfig(dt=1e-3, horizon=1.0))


def test_ensemble_stream_matches_arrays(atoms):
    cfg = SimConfig(dt=5e-3, horizon=1.0, seed=3, n=300, marks=(1.0,))
    arr = run_ensemble(atoms, 1.0, cfg)
    rows = list(ensemble(atoms, 1.0, cfg))
    assert len(rows) == 300
    for i in (0, 150, 299):
        assert rows[i].height == arr.height[i] or (math.isinf(rows[i].height) and math.isinf(arr.height[i]))
        assert rows[i].sigma == arr.sigma[i]
        assert rows[i].x_at[0] == arr.x_at[i, 0]
    assert list(ensemble(atoms, 1.0, SimConfig(dt=5e-3, horizon=1.0, n=0))) == []


def test_cbi_reduces_to_cb_without_immigration():
    mech = BranchingMechanism(0.5, 0.0, ZeroMeasure())
    cfg = SimConfig(dt=1e-3, horizon=1.0, seed=5, n=1)
    a = sample_path(mech, 1.0, cfg, replicate=2)
    b = sample_cbi_star(mech, 1.0, cfg, replicate=2)
    assert np.array_equal(a.values, b.values)


def test_cbi_preconditions(super_h0_true, se):
    cfg = SimConfig(dt=1e-3, horizon=1.0)
    with pytest.raises(MechanismError):
        sample_cbi_star(super_h0_true, 1.0, cfg)
    with pytest.raises(MechanismError):
        run_ensemble(BranchingMechanism(0.0, 1.0, ZeroMeasure()), 1.0, cfg, mode="killed")


def test_cbi_stable_marginal_matches_size_biased_transform(stable):
    # E[e^{-4 X*_3}] = (v/lam)^gamma e^{-x v} with v = v_3(4) = 1/4
    cfg = SimConfig(
        dt=2e-3, horizon=3.0, eps=0.05, seed=41, n=20000, marks=(3.0,),
        small_jump_mode="diffusion", cap=2e3, threads=2,
    )
    stats = run_ensemble(stable, 1.0, cfg, mode="cbi")
    xt = stats.x_at[:, 0]
    F = np.where(np.isfinite(xt), np.exp(-4.0 * np.where(np.isfinite(xt), xt, 0.0)), 0.0)
    target = (0.25 / 4.0) ** 1.5 * math.exp(-0.25)
    se_ = F.std() / math.sqrt(len(F))
    assert abs(F.mean() - target) <= 3 * se_ + 0.05 * target


def test_cbi_dominates_cb(se):
    cfg = SimConfig(dt=2e-3, horizon=1.0, seed=47, n=20000, marks=(1.0,), threads=2)
    xb = run_ensemble(se, 1.0, cfg).x_at[:, 0]
    xs = run_ensemble(se, 1.0, cfg, mode="cbi").x_at[:, 0]
    # stochastic dominance: star CDF sits below at every decile
    qs = np.quantile(xb, [0.1, 0.3, 0.5, 0.7, 0.9])
    for q in qs:
        p_cb = np.mean(xb <= q)
        p_star = np.mean(xs <= q)
        assert p_star <= p_cb + 3.0 * math.sqrt(0.25 / len(xb)) * 2


def test_killed_time_distribution(se):
    cfg = SimConfig(dt=1e-3, horizon=1.0, seed=53, n=50000, marks=(1.0,), threads=2)
    stats = run_ensemble(se, 1.0, cfg, mode="killed")
    p = float(np.mean(stats.status == 2))
    target = 1.0 - math.exp(-1.0)
    assert abs(p - target) < 3 * math.sqrt(target * (1 - target) / cfg.n) + 2e-3


def test_killed_mostly_dead_for_large_alpha():
    mech = BranchingMechanism(25.0, 0.0, ExpDensity(1.0, 1.0))
    cfg = SimConfig(dt=2e-4, horizon=1.0, seed=59, n=2000)
    stats = run_ensemble(mech, 1.0, cfg, mode="killed")
    assert np.mean(stats.status == 2) > 0.99


def test_killed_conditional_marginal_matches_cbi(se):
    cfg = SimConfig(dt=2e-3, horizon=1.0, seed=61, n=20000, marks=(1.0,), threads=2)
    killed = run_ensemble(se, 1.0, cfg, mode="killed")
    star = run_ensemble(se, 1.0, cfg, mode="cbi")
    alive = np.isfinite(killed.x_at[:, 0])
    res = ks_2samp(killed.x_at[alive, 0], star.x_at[:, 0][:10000])
    assert res.pvalue > 0.01


def test_path_jump_records(se):
    cfg = SimConfig(dt=1e-3, horizon=2.0, seed=67, n=1)
    path = sample_path(se, 1.0, cfg, replicate=1)
    assert len(path.jump_times) == len(path.jump_sizes)
    assert np.all(path.jump_sizes > 0)
    assert not path.jumps_truncated
    assert path.width >= path.values[0]
