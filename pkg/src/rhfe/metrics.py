"""Monte Carlo evaluation and figure-data emission.

The evaluation protocol: one shared identification result, M independent
online runs with fresh noise seeds, and the estimation error collected at a
fixed sample index in the steady fault phase.  Error clouds are summarized
by bias, covariance, RMSE, and a 3-sigma Gaussian ellipse (center plus
shape matrix; the contour is (x - c)^T S^-1 (x - c) = 9).
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _linalg as la
from .errors import SolverFailure, UnknownFigure
from .estimator import EstimatorGain, StackedWindow, estimate
from .online import OnlineContext, gate, solve_online
from .simulate import (
    ControllerConfig,
    FaultProfile,
    TrajectoryDataset,
    replicate_seed,
    simulate_closed_loop,
)


@dataclass
class OfflineAlgorithm:
    """A fixed gain applied to each window."""

    name: str
    gain: EstimatorGain

    @property
    def tau(self) -> int:
        return self.gain.tau

    @property
    def L(self) -> int:
        return self.gain.L

    def estimate_window(self, win: StackedWindow) -> np.ndarray:
        return estimate(self.gain, win)


@dataclass
class OnlineAlgorithm:
    """Window-adaptive gain: re-solves where the gate fires, falls back to
    the offline gain on solver failure, and keeps a gate tally."""

    name: str
    ctx: OnlineContext
    fired: int = 0
    fallbacks: int = 0
    solve_ms: list = field(default_factory=list)

    @property
    def tau(self) -> int:
        return self.ctx.offline.tau

    @property
    def L(self) -> int:
        return self.ctx.offline.L

    def estimate_window(self, win: StackedWindow) -> np.ndarray:
        gain = self.ctx.offline
        if gate(self.ctx, win):
            self.fired += 1
            t0 = time.perf_counter()
            try:
                gain = solve_online(self.ctx, win)
            except SolverFailure:
                self.fallbacks += 1
            self.solve_ms.append((time.perf_counter() - t0) * 1e3)
        return estimate(gain, win)

    def gate_stats(self) -> dict:
        ms = self.solve_ms
        return {
            "fired": self.fired,
            "fallbacks": self.fallbacks,
            "mean_solve_ms": float(np.mean(ms)) if ms else 0.0,
            "max_solve_ms": float(np.max(ms)) if ms else 0.0,
        }


@dataclass
class ErrorCloud:
    name: str
    errors: np.ndarray  # M x n_f
    bias: np.ndarray
    cov: np.ndarray
    rmse: float
    ellipse_center: np.ndarray
    ellipse_shape: np.ndarray


def error_stats(name: str, errors: np.ndarray) -> ErrorCloud:
    """Cloud summary; the covariance uses the 1/M normalization so that
    RMSE^2 = ||bias||^2 + tr(cov) holds exactly."""
    errors = np.atleast_2d(np.asarray(errors, dtype=float))
    m = errors.shape[0]
    bias = errors.mean(axis=0)
    centered = errors - bias
    if m == 1:
        warnings.warn(f"{name}: single replicate, covariance degenerate to zero")
        cov = np.zeros((errors.shape[1], errors.shape[1]))
    else:
        cov = la.symmetrize(centered.T @ centered / m)
    rmse = float(np.sqrt((errors**2).sum(axis=1).mean()))
    return ErrorCloud(
        name=name,
        errors=errors,
        bias=bias,
        cov=cov,
        rmse=rmse,
        ellipse_center=bias.copy(),
        ellipse_shape=cov.copy(),
    )


@dataclass
class MetricsReport:
    clouds: dict  # name -> ErrorCloud
    k_eval: int
    M: int
    f_true: np.ndarray  # true fault at k_eval
    gate_stats: dict  # name -> dict, online algorithms only
    runtimes: dict  # name -> seconds
    traces: dict | None = None  # name -> (T, n_f) estimates, single run
    f_trace: np.ndarray | None = None
    sweep: list | None = None  # rows for the tuning figure


def monte_carlo(
    model,
    ctrl: ControllerConfig,
    fault: FaultProfile,
    cfg,
    algorithms: list,
    M: int,
    seed: int,
    k_eval: int = 150,
) -> MetricsReport:
    """M independent runs; per-algorithm errors at the window whose
    estimate lands on k_eval (window end k_eval + tau)."""
    if M < 1:
        raise ValueError("M must be >= 1")
    errors = {a.name: [] for a in algorithms}
    runtimes = {a.name: 0.0 for a in algorithms}
    t_needed = max(a.L + a.tau for a in algorithms)
    t_sim = max(k_eval + max(a.tau for a in algorithms) + 1, t_needed)
    f_true = None
    for i in range(M):
        traj = simulate_closed_loop(
            model, ctrl, fault, cfg, T=t_sim + 1, seed=replicate_seed(seed, i)
        )
        if f_true is None:
            f_true = traj.f_true[k_eval].copy()
        for a in algorithms:
            win = StackedWindow.from_trajectory(traj, k_eval + a.tau, a.L)
            t0 = time.perf_counter()
            errors[a.name].append(a.estimate_window(win) - traj.f_true[k_eval])
            runtimes[a.name] += time.perf_counter() - t0
    clouds = {name: error_stats(name, np.array(errs)) for name, errs in errors.items()}
    gates = {
        a.name: a.gate_stats() for a in algorithms if isinstance(a, OnlineAlgorithm)
    }
    return MetricsReport(
        clouds=clouds,
        k_eval=k_eval,
        M=M,
        f_true=f_true,
        gate_stats=gates,
        runtimes=runtimes,
    )


def estimate_traces(
    model,
    ctrl: ControllerConfig,
    fault: FaultProfile,
    cfg,
    algorithms: list,
    T: int,
    seed: int,
):
    """Single-run per-sample estimates for the time-trace figure."""
    traj = simulate_closed_loop(model, ctrl, fault, cfg, T=T, seed=seed)
    traces = {}
    for a in algorithms:
        out = np.full((T, traj.f_true.shape[1]), np.nan)
        for k in range(a.L - 1, T):
            out[k - a.tau] = a.estimate_window(StackedWindow.from_trajectory(traj, k, a.L))
        traces[a.name] = out
    return traces, traj.f_true


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _fmt(v):
    return format(float(v), ".17g")


def figure_data(report: MetricsReport, figure_id: str, out_dir) -> list:
    """Emit the data series of one figure as CSV files; returns the paths.

    fig2: per-sample true fault and estimates (requires traces).
    fig3: error clouds and 3-sigma ellipses (center + shape matrix).
    fig4: bias/variance/RMSE against the fault-bias bound (requires sweep).
    """
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fid = figure_id.lower().rstrip("ab")
    paths = []
    if fid == "fig2":
        if not report.traces or report.f_trace is None:
            raise UnknownFigure("fig2 requested but the report has no traces")
        names = sorted(report.traces)
        n_f = report.f_trace.shape[1]
        header = ["k"] + [f"f{j+1}_true" for j in range(n_f)]
        for name in names:
            header += [f"f{j+1}_{name}" for j in range(n_f)]
        rows = []
        for k in range(report.f_trace.shape[0]):
            row = [k] + [_fmt(v) for v in report.f_trace[k]]
            for name in names:
                row += [_fmt(v) for v in report.traces[name][k]]
            rows.append(row)
        path = out_dir / "fig2_traces.csv"
        _write_csv(path, header, rows)
        paths.append(path)
    elif fid == "fig3":
        if not report.clouds:
            raise UnknownFigure("fig3 requested but the report has no error clouds")
        n_f = report.f_true.shape[0]
        path = out_dir / "fig3_errors.csv"
        header = ["algorithm", "replicate"] + [f"e{j+1}" for j in range(n_f)]
        rows = [
            [name, i] + [_fmt(v) for v in err]
            for name in sorted(report.clouds)
            for i, err in enumerate(report.clouds[name].errors)
        ]
        _write_csv(path, header, rows)
        paths.append(path)
        path = out_dir / "fig3_ellipses.csv"
        header = (
            ["algorithm", "rmse"]
            + [f"center{j+1}" for j in range(n_f)]
            + [f"shape{i+1}{j+1}" for i in range(n_f) for j in range(n_f)]
        )
        rows = []
        for name in sorted(report.clouds):
            c = report.clouds[name]
            rows.append(
                [name, _fmt(c.rmse)]
                + [_fmt(v) for v in c.ellipse_center]
                + [_fmt(v) for v in c.ellipse_shape.ravel()]
            )
        _write_csv(path, header, rows)
        paths.append(path)
    elif fid == "fig4":
        if not report.sweep:
            raise UnknownFigure("fig4 requested but the report has no sweep rows")
        path = out_dir / "fig4_sweep.csv"
        header = ["eta", "gamma_f2", "bias_norm", "variance", "rmse"]
        rows = [
            [
                _fmt(r["eta"]),
                _fmt(r["gamma_f2"]),
                _fmt(r["bias_norm"]),
                _fmt(r["variance"]),
                _fmt(r["rmse"]),
            ]
            for r in report.sweep
        ]
        _write_csv(path, header, rows)
        paths.append(path)
    else:
        raise UnknownFigure(f"no data emitter for figure {figure_id!r}")
    return [str(p) for p in paths]
