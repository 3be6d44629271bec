"""Command-line front end: simulation, identification, design, estimation,
trade-off sweeps, and benchmark figure data, all on persisted artifacts.

Exit codes: 0 success, 2 validation/usage error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import (
    IndefiniteMiddleMatrix,
    InfeasibleFaultConstraint,
    RhfeError,
    SolverFailure,
)
from .models import FaultConfig

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3


def parse_fault(text: str) -> FaultConfig:
    """`sensor:J`, `actuator:L`, or `both:J,L` with 1-based indices, e.g.
    `sensor:1,2` or `both:1;1,2` (sensors before the semicolon)."""
    kind, _, rest = text.partition(":")
    if not rest:
        raise ValueError(f"fault spec {text!r} needs indices after ':'")

    def ints(s):
        return tuple(int(t) for t in s.split(",") if t)

    if kind == "sensor":
        return FaultConfig(sensors=ints(rest))
    if kind == "actuator":
        return FaultConfig(actuators=ints(rest))
    if kind == "both":
        sens, _, act = rest.partition(";")
        return FaultConfig(sensors=ints(sens), actuators=ints(act))
    raise ValueError(f"unknown fault kind {kind!r}")


def load_model_arg(name: str):
    from . import serialize
    from .simulate import vtol_model

    if name == "vtol":
        return vtol_model()
    model = serialize.load_model(name)
    return model, None


def _controller(model, ctrl, eta, eta_cov):
    from .simulate import ControllerConfig

    if ctrl is None:
        ctrl = ControllerConfig(Ky=np.zeros((model.n_u, model.n_y)))
    if eta_cov is not None:
        return ctrl.with_reference(cov=float(eta_cov) * np.eye(model.n_u))
    if eta is not None:
        return ctrl.with_reference(level=[float(eta)] * model.n_u)
    return ctrl


def _fault_profile(model_n_f, onset):
    from .simulate import FaultProfile, fault_profile_benchmark

    if model_n_f == 2:
        prof = fault_profile_benchmark()
        if onset is not None:
            prof = FaultProfile(onset=onset, channels=prof.channels)
        return prof
    return FaultProfile(
        onset=50 if onset is None else onset,
        channels=tuple(("const", 1.0) for _ in range(model_n_f)),
    )


def cmd_simulate(args) -> int:
    from .simulate import FaultProfile, simulate_closed_loop

    model, ctrl = load_model_arg(args.model)
    cfg = parse_fault(args.fault)
    ctrl = _controller(model, ctrl, args.eta, args.eta_cov)
    if args.fault_free:
        fault = FaultProfile(
            onset=10**9, channels=tuple(("zero",) for _ in range(cfg.n_f))
        )
    else:
        fault = _fault_profile(cfg.n_f, args.fault_onset)
    traj = simulate_closed_loop(model, ctrl, fault, cfg, T=args.N, seed=args.seed)
    traj.to_csv(args.out)
    print(f"wrote {args.N} samples to {args.out}")
    return EXIT_OK


def cmd_identify(args) -> int:
    from . import serialize
    from .identify import identify
    from .simulate import TrajectoryDataset

    model, _ = load_model_arg(args.model)
    cfg = parse_fault(args.fault)
    traj = TrajectoryDataset.from_csv(args.traj, model.n_u, model.n_y, cfg.n_f)
    markov = identify(traj, args.p, cfg, feedthrough=args.feedthrough)
    serialize.save_identification(markov, args.out)
    print(f"identified p={args.p} Markov parameters from {traj.T} samples -> {args.out}")
    return EXIT_OK


def cmd_design(args) -> int:
    from . import serialize
    from .estimator import nominal_gain
    from .robust import default_tuning, offline_gain, problem_from_markov

    markov = serialize.load_identification(args.ident)
    tau = args.tau
    if args.mode == "alg1":
        gain = nominal_gain(markov, args.L, args.m, tau, kind="nominal_identified")
    elif args.mode == "alg2":
        nom = nominal_gain(markov, args.L, args.m, tau)
        prob = problem_from_markov(markov, args.L, args.m, tau)
        gf2, gz2 = args.gamma_f2, args.gamma_z2
        if gf2 is None or gz2 is None:
            auto_f2, auto_z2, _, _ = default_tuning(prob, nom.Gmat)
            gf2 = auto_f2 if gf2 is None else gf2
            gz2 = auto_z2 if gz2 is None else gz2
        gain = offline_gain(prob, nom.T_y, nom.T_u, float(gf2), float(gz2))
        print(f"gamma_f2={gf2:.6g} gamma_z2={gz2:.6g}")
    else:
        raise ValueError(f"design mode {args.mode!r} (use alg1 or alg2)")
    serialize.save_estimator(gain, args.out)
    print(f"{args.mode} gain ({gain.Gmat.shape[0]}x{gain.Gmat.shape[1]}) -> {args.out}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    import csv

    from . import serialize
    from .estimator import estimate_trajectory
    from .simulate import TrajectoryDataset

    gain = serialize.load_estimator(args.est)
    n_y = gain.T_y.shape[1] // gain.L
    n_u = gain.T_u.shape[1] // gain.L
    traj = TrajectoryDataset.from_csv(args.traj, n_u, n_y, gain.n_f)
    est = estimate_trajectory(gain, traj)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k"] + [f"fhat{j+1}" for j in range(gain.n_f)])
        for k in range(est.shape[0]):
            w.writerow([k] + [format(v, ".17g") for v in est[k]])
    print(f"estimates for {est.shape[0]} samples -> {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from . import serialize
    from .robust import (
        gamma_f_min,
        gamma_z_min,
        problem_from_markov,
        solve_G1,
        tradeoff_csv,
        tradeoff_sweep,
    )

    markov = serialize.load_identification(args.ident)
    prob = problem_from_markov(markov, args.L, args.m, args.tau)
    if args.gamma_f2 is not None:
        gf_grid = [args.gamma_f2]
    else:
        gf_min, _ = gamma_f_min(prob)
        gf_grid = np.linspace(gf_min * 1.1, 0.9, args.points)
    rows = []
    for gf in gf_grid:
        if args.gamma_z2 is not None:
            gz_grid = [args.gamma_z2]
        else:
            gz_min, _, _ = gamma_z_min(prob, float(gf))
            _, gz1, _ = solve_G1(prob, float(gf))
            gz_grid = np.linspace(gz_min + 0.25 * (gz1 - gz_min), gz1, args.points)
        rows.extend(tradeoff_sweep(prob, [gf], gz_grid))
    tradeoff_csv(rows, args.out)
    print(f"{len(rows)} sweep rows -> {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import run_bench

    paths = run_bench(
        figure=args.figure,
        fault=parse_fault(args.fault) if args.fault else None,
        N=args.N,
        p=args.p,
        L=args.L,
        m=args.m,
        eta=args.eta,
        mc=args.mc,
        seed=args.seed,
        alpha=args.alpha,
        gamma_f2=args.gamma_f2,
        gamma_z2=args.gamma_z2,
        modes=args.mode,
        out_dir=args.out,
    )
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rhfe", description="receding-horizon fault estimation toolkit"
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, model=True):
        if model:
            p.add_argument("--model", default="vtol", help="builtin 'vtol' or model JSON path")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("simulate", help="closed-loop simulation to trajectory CSV")
    common(p)
    p.add_argument("--fault", required=True, help="sensor:J | actuator:L | both:J;L")
    p.add_argument("--N", type=int, default=1000, help="number of samples")
    p.add_argument("--eta", type=float, default=None, help="constant reference level")
    p.add_argument("--eta-cov", type=float, default=None, help="white reference variance")
    p.add_argument("--fault-free", action="store_true")
    p.add_argument("--fault-onset", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="Markov parameters from a trajectory CSV")
    common(p)
    p.add_argument("--fault", required=True)
    p.add_argument("--traj", required=True)
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--feedthrough", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("design", help="estimator gain from an identification result")
    common(p, model=False)
    p.add_argument("--ident", required=True)
    p.add_argument("--mode", choices=["alg1", "alg2"], default="alg2")
    p.add_argument("--L", type=int, default=30)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--tau", type=int, default=0)
    p.add_argument("--gamma-f2", type=float, default=None)
    p.add_argument("--gamma-z2", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("estimate", help="run a saved gain over a trajectory CSV")
    common(p, model=False)
    p.add_argument("--est", required=True)
    p.add_argument("--traj", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="bias/variance trade-off table")
    common(p, model=False)
    p.add_argument("--ident", required=True)
    p.add_argument("--L", type=int, default=30)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--tau", type=int, default=0)
    p.add_argument("--gamma-f2", type=float, default=None)
    p.add_argument("--gamma-z2", type=float, default=None)
    p.add_argument("--points", type=int, default=6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="reproduce a benchmark figure's data files")
    common(p)
    p.add_argument("--figure", required=True, help="2 | 3a | 3b | 4")
    p.add_argument("--fault", default=None)
    p.add_argument("--N", type=int, default=1000)
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--L", type=int, default=30)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--eta", type=float, default=15.0)
    p.add_argument("--mc", type=int, default=200)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--gamma-f2", type=float, default=None)
    p.add_argument("--gamma-z2", type=float, default=None)
    p.add_argument(
        "--mode",
        action="append",
        choices=["alg0", "alg1", "alg2", "alg3"],
        default=None,
        help="algorithms to include (repeatable; default depends on figure)",
    )
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_bench)
    return ap


def cli_main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (SolverFailure, InfeasibleFaultConstraint, IndefiniteMiddleMatrix) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (RhfeError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
