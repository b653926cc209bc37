"""Command-line interface: phi, flow, maxjump, simulate, validate.

Every invocation is deterministic given its arguments (seeds are explicit,
defaults are fixed constants) and writes its artifacts under name-stable
paths so repeated runs diff cleanly.  Exit status: 0 success, 1 failed
validation, 2 bad configuration or arguments.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import flows, maxjump as mj, validate as val
from .mechanism import BranchingMechanism, MechanismError, mechanism_from_config
from .simulate import SimConfig, run_ensemble

DEFAULT_SEED = 20240817


def _load_mech(path: str) -> BranchingMechanism:
    p = Path(path)
    if not p.exists():
        raise MechanismError(f"mechanism config not found: {path}")
    with p.open() as fh:
        return mechanism_from_config(json.load(fh))


def _parse_grid(text: str) -> list[float]:
    """Either comma-separated values or lo:hi:num (inclusive, linear)."""
    if ":" in text:
        lo, hi, num = text.split(":")
        return list(np.linspace(float(lo), float(hi), int(num)))
    return [float(v) for v in text.split(",") if v]


def _parse_time(text: str) -> float:
    return math.inf if text.strip().lower() in ("inf", "infinity") else float(text)


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _cmd_phi(args) -> int:
    mech = _load_mech(args.mech)
    lams = _parse_grid(args.lambdas)
    rows = [[lam, mech.phi(lam), mech.phi_prime(lam)] for lam in lams]
    out = Path(args.out) / "phi.csv"
    _write_csv(out, ["lambda", "phi", "phi_prime"], rows)
    print(f"phi: wrote {len(rows)} rows to {out}")
    return 0


def _cmd_flow(args) -> int:
    mech = _load_mech(args.mech)
    ts = list(np.linspace(0.0 if args.kind != "vbar" else args.tmax / args.num, args.tmax, args.num))
    if args.kind == "v":
        sol = flows.solve_v(mech, args.lam, args.tmax)
        rows = [[t, sol(t)] for t in ts]
    elif args.kind == "u":
        sol = flows.solve_u(mech, args.lam, args.tmax)
        rows = [[t, sol(t)] for t in ts]
    else:
        curve = flows.extinction_curve(mech, ts)
        rows = [[t, v] for t, v in zip(curve.grid, curve.values)]
    out = Path(args.out) / f"flow_{args.kind}.csv"
    _write_csv(out, ["t", "value"], rows)
    print(f"flow {args.kind}: wrote {len(rows)} rows to {out}")
    return 0


def _cmd_maxjump(args) -> int:
    mech = _load_mech(args.mech)
    t = _parse_time(args.t)
    rs = _parse_grid(args.r_grid)
    rep = mech.assumptions()
    density_ok = (
        math.isinf(t)
        and mech.classify() != "supercritical"
        and not mech.levy.atom_sizes()
    )
    rows = []
    for r in rs:
        q = mj.JumpLawQuery(mech, args.x, t, r)
        cdf = mj.local_max_jump_cdf(q) if math.isfinite(t) else mj.global_max_jump_cdf(q)
        density = mj.global_max_jump_density(mech, args.x, r) if density_ok else ""
        try:
            asym = mj.tail_asymptote(q)
            asym_val = "divergent" if asym.divergent else asym.value
        except MechanismError:
            asym_val = ""
        rows.append([r, cdf, density, asym_val])
    out_csv = Path(args.out) / "maxjump.csv"
    _write_csv(out_csv, ["r", "cdf", "density", "asymptote"], rows)
    law = mj.global_max_jump_law(mech, args.x)
    summary = {
        "x": args.x,
        "t": "inf" if math.isinf(t) else t,
        "assumptions": {
            "h0": rep.h0,
            "h1": rep.h1,
            "h2": rep.h2,
            "largest_root": rep.largest_root,
        },
        "atom_at_zero": law.atom_at_zero,
        "atom_at_sup_support": law.atom_at_sup,
        "sup_support": "inf" if math.isinf(law.sup_support) else law.sup_support,
    }
    out_json = Path(args.out) / "maxjump_summary.json"
    out_json.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"maxjump: wrote {len(rows)} rows to {out_csv} and summary to {out_json}")
    return 0


def _cmd_simulate(args) -> int:
    mech = _load_mech(args.mech)
    marks = tuple(_parse_grid(args.marks)) if args.marks else ()
    cfg = SimConfig(
        dt=args.dt,
        horizon=args.T,
        eps=args.eps,
        seed=args.seed,
        n=args.n,
        marks=marks,
        small_jump_mode=args.small_jumps,
        threads=args.threads,
    )
    stats = run_ensemble(mech, args.x, cfg, mode=args.mode)
    header = ["replicate", "height", "width", "sigma", "supjump", "njumps", "status"]
    header += [f"supjump@{t:g}" for t in stats.marks]
    header += [f"X@{t:g}" for t in stats.marks]
    rows = []
    for i in range(stats.n):
        row = [
            i,
            stats.height[i],
            stats.width[i],
            stats.sigma[i],
            stats.supjump[i],
            int(stats.njumps[i]),
            int(stats.status[i]),
        ]
        row += list(stats.supjump_at[i]) + list(stats.x_at[i])
        rows.append(row)
    out = Path(args.out) / "ensemble_stats.csv"
    _write_csv(out, header, rows)
    print(f"simulate: wrote {stats.n} replicates to {out}")
    if args.paths > 0:
        from .simulate import sample_path

        pdir = Path(args.out)
        for i in range(min(args.paths, cfg.n)):
            sp = sample_path(mech, args.x, cfg, replicate=i)
            _write_csv(
                pdir / f"path_{i:04d}.csv",
                ["t", "X"],
                [[t, v] for t, v in zip(sp.times, sp.values)],
            )
        print(f"simulate: wrote {min(args.paths, cfg.n)} path files to {pdir}")
    return 0


def _cmd_validate(args) -> int:
    reports = val.run_experiment(args.experiment, n=args.n, seed=args.seed, threads=args.threads)
    out = Path(args.out) / f"validate_{args.experiment}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n")
    failed = 0
    for r in reports:
        print(r.line())
        failed += 0 if r.passed else 1
    print(f"validate {args.experiment}: {len(reports) - failed}/{len(reports)} checks passed; report at {out}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cbjump",
        description="Maximal-jump and related laws of continuous-state branching processes",
    )
    ap.add_argument("--out", default="cbjump-out", help="output directory (default: cbjump-out)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phi", help="tabulate phi and its derivative")
    p.add_argument("--mech", required=True, help="mechanism config (JSON)")
    p.add_argument("--lambdas", default="0:10:21", help="grid: lo:hi:num or comma list")
    p.set_defaults(fn=_cmd_phi)

    p = sub.add_parser("flow", help="tabulate a Laplace flow")
    p.add_argument("--mech", required=True)
    p.add_argument("--kind", choices=["v", "u", "vbar"], default="v")
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--tmax", type=float, default=10.0)
    p.add_argument("--num", type=int, default=101)
    p.set_defaults(fn=_cmd_flow)

    p = sub.add_parser("maxjump", help="maximal-jump CDF / density / asymptote over a level grid")
    p.add_argument("--mech", required=True)
    p.add_argument("--x", type=float, default=1.0)
    p.add_argument("--t", default="inf", help="window length or 'inf'")
    p.add_argument("--r-grid", default="0.5,1,2", dest="r_grid")
    p.set_defaults(fn=_cmd_maxjump)

    p = sub.add_parser("simulate", help="simulate an ensemble and dump per-replicate statistics")
    p.add_argument("--mech", required=True)
    p.add_argument("--x", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--marks", default="", help="times at which to record X and running statistics")
    p.add_argument("--mode", choices=["cb", "cbi", "killed"], default="cb")
    p.add_argument("--small-jumps", choices=["drop", "diffusion"], default="drop", dest="small_jumps")
    p.add_argument("--paths", type=int, default=0, help="additionally dump this many full paths")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("validate", help="run a named Monte Carlo validation experiment")
    p.add_argument("--experiment", required=True, choices=sorted(val.EXPERIMENTS))
    p.add_argument("--n", type=int, default=None, help="override replicate count")
    p.add_argument("--seed", type=int, default=None, help="override seed")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=_cmd_validate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except MechanismError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
