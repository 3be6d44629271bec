"""End-to-end benchmark pipelines behind the `bench` subcommand.

Each figure id maps to one pipeline on the built-in model: shared
identification batch, per-algorithm designs, Monte Carlo evaluation, and
CSV emission through the figure-data writers.
"""

from __future__ import annotations

import numpy as np

from .errors import UnknownFigure
from .estimator import nominal_gain
from .identify import identify
from .metrics import (
    MetricsReport,
    OfflineAlgorithm,
    OnlineAlgorithm,
    estimate_traces,
    figure_data,
    monte_carlo,
)
from .models import FaultConfig, markov_parameters, steady_state_predictor
from .online import GATE_ALPHA, build_context
from .robust import (
    build_sensitivity,
    default_tuning,
    gamma_f_min,
    offline_gain,
    problem_from_markov,
    z_bound_tuning,
)
from .simulate import FaultProfile, fault_profile_benchmark, simulate_closed_loop, vtol_model

IDENT_SEED_OFFSET = 1_000_000
EVAL_SEED_OFFSET = 7_000


def _identification(model, ctrl, cfg, N, p, seed):
    ctrl_id = ctrl.with_reference(cov=np.eye(model.n_u))
    quiet = FaultProfile(onset=10**9, channels=tuple(("zero",) for _ in range(cfg.n_f)))
    traj = simulate_closed_loop(
        model, ctrl_id, quiet, cfg, T=N + p, seed=seed + IDENT_SEED_OFFSET
    )
    return identify(traj, p, cfg)


def _algorithms(model, cfg, mk_hat, modes, L, m, tau, alpha, gamma_f2, gamma_z2):
    algs = []
    prob = None
    g2 = None
    if "alg0" in modes:
        pred = steady_state_predictor(model)
        mk_true = markov_parameters(pred, cfg, mk_hat.p)
        algs.append(OfflineAlgorithm("alg0", nominal_gain(mk_true, L, m, tau, kind="alg0")))
    g1 = nominal_gain(mk_hat, L, m, tau, kind="alg1")
    if "alg1" in modes:
        algs.append(OfflineAlgorithm("alg1", g1))
    if "alg2" in modes or "alg3" in modes:
        prob = problem_from_markov(mk_hat, L, m, tau)
        gf2, gz2 = gamma_f2, gamma_z2
        if gf2 is None or gz2 is None:
            auto_f2, auto_z2, _, _ = default_tuning(prob, g1.Gmat)
            gf2 = auto_f2 if gf2 is None else gf2
            gz2 = auto_z2 if gz2 is None else gz2
        g2 = offline_gain(prob, g1.T_y, g1.T_u, float(gf2), float(gz2))
        if "alg2" in modes:
            algs.append(OfflineAlgorithm("alg2", g2))
        if "alg3" in modes:
            stack = build_sensitivity(mk_hat, L, m, tau)
            ctx = build_context(
                prob, stack.m_z, g2, alpha=GATE_ALPHA if alpha is None else alpha
            )
            algs.append(OnlineAlgorithm("alg3", ctx))
    return algs, prob, g1


def run_bench(
    figure: str,
    fault: FaultConfig | None = None,
    N: int = 1000,
    p: int = 10,
    L: int = 30,
    m: int = 10,
    eta: float = 15.0,
    mc: int = 200,
    seed: int = 0,
    alpha: float | None = None,
    gamma_f2: float | None = None,
    gamma_z2: float | None = None,
    modes: list | None = None,
    out_dir=".",
) -> list:
    figure = str(figure).lower().lstrip("fig")
    if figure not in ("2", "3a", "3b", "4"):
        raise UnknownFigure(f"no benchmark pipeline for figure {figure!r}")
    model, ctrl = vtol_model()
    if fault is None:
        fault = FaultConfig(sensors=(1, 2)) if figure == "3b" else FaultConfig(actuators=(1, 2))
    tau = 1 if fault.actuators else 0
    if modes is None:
        modes = {
            "2": ["alg0", "alg2"],
            "3a": ["alg0", "alg1", "alg2"],
            "3b": ["alg2", "alg3"],
            "4": ["alg2"],
        }[figure]
    mk_hat = _identification(model, ctrl, fault, N, p, seed)
    ctrl_eval = ctrl.with_reference(level=[float(eta)] * model.n_u)
    profile = fault_profile_benchmark()

    if figure == "4":
        return _fig4(
            model, ctrl, fault, mk_hat, profile, L, m, tau, mc, seed, out_dir
        )

    algs, _, _ = _algorithms(
        model, fault, mk_hat, modes, L, m, tau, alpha, gamma_f2, gamma_z2
    )
    if figure == "2":
        traces, f_trace = estimate_traces(
            model, ctrl_eval, profile, fault, algs, T=200, seed=seed + EVAL_SEED_OFFSET
        )
        report = MetricsReport(
            clouds={}, k_eval=-1, M=1, f_true=f_trace[-1], gate_stats={},
            runtimes={}, traces=traces, f_trace=f_trace,
        )
        return figure_data(report, "fig2", out_dir)
    report = monte_carlo(
        model, ctrl_eval, profile, fault, algs, M=mc, seed=seed + EVAL_SEED_OFFSET
    )
    return figure_data(report, "fig3", out_dir)


def _fig4(model, ctrl, fault, mk_hat, profile, L, m, tau, mc, seed, out_dir):
    """RMSE/bias/variance against the fault-bias bound for reference levels
    0, 1, 2; designs are shared across levels (they do not depend on it)."""
    prob = problem_from_markov(mk_hat, L, m, tau)
    g1 = nominal_gain(mk_hat, L, m, tau)
    gf_min, _ = gamma_f_min(prob)
    grid = gf_min + (0.9 - gf_min) * np.linspace(0.05, 1.0, 6)
    designs = []
    for gf in grid:
        gz2, _, _ = z_bound_tuning(prob, float(gf))
        designs.append((float(gf), offline_gain(prob, g1.T_y, g1.T_u, float(gf), gz2)))
    rows = []
    for level in (0.0, 1.0, 2.0):
        ctrl_eval = ctrl.with_reference(level=[level] * model.n_u)
        algs = [OfflineAlgorithm(f"gf{i}", g) for i, (_, g) in enumerate(designs)]
        report = monte_carlo(
            model, ctrl_eval, profile, fault, algs, M=mc, seed=seed + EVAL_SEED_OFFSET
        )
        for i, (gf, gain) in enumerate(designs):
            cloud = report.clouds[f"gf{i}"]
            rows.append(
                {
                    "eta": level,
                    "gamma_f2": gf,
                    "bias_norm": float(np.linalg.norm(cloud.bias)),
                    "variance": prob.variance(gain.Gmat),
                    "rmse": cloud.rmse,
                }
            )
    report = MetricsReport(
        clouds={}, k_eval=150, M=mc, f_true=np.zeros(prob.n_f), gate_stats={},
        runtimes={}, sweep=rows,
    )
    return figure_data(report, "fig4", out_dir)
