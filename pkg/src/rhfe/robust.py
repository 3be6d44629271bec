"""Offline robust mixed-norm design and its tuning geometry.

Identification errors enter the estimators as the innovation batch times
structured sensitivity stacks.  Their second-order statistics reduce to
trace-gram matrices (one scalar per pair of window row blocks) Kronecker
the innovation covariance, which keeps every design problem at window
scale: the batch itself is never replicated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _linalg as la
from .conic import (
    FEASIBILITY_SLACK,
    ConicProgram,
    QuadConstraint,
    solve,
    trace_objective_value,
)
from .errors import InfeasibleFaultConstraint, ShapeMismatch, SolverFailure
from .estimator import EstimatorGain, selector, stacked_operators
from .models import MarkovSet
from .structured import block_hankel, block_toeplitz, toeplitz_first_columns

PI_F_REG_RTOL = 1e-10
# Two solutions whose metrics differ by less than this count as "constant"
# in the trade-off table.
SWEEP_TIE_TOL = 1e-6


@dataclass
class SensitivityStack:
    """Structured stacks of the LS sensitivity blocks, mirroring the shapes
    of their Markov-parameter counterparts with row blocks of width N-bar.

    ``m_z`` maps the stacked I/O window [y; u] to the per-block innovation
    loadings (the error-propagation direction of the residual generator).
    """

    m_hankel: np.ndarray  # Hankel of M_i^u
    m_t_u: np.ndarray
    m_t_y: np.ndarray
    m_t_f_tau: np.ndarray
    m_upsilon: np.ndarray  # [m_hankel, m_t_f_tau]
    m_z: np.ndarray  # [Toeplitz(M^y), Toeplitz(M^u)] acting on [y; u]
    L: int
    n_columns: int

    def row_blocks(self, mat: np.ndarray) -> np.ndarray:
        return mat.reshape(self.L, self.n_columns, -1)


def build_sensitivity(markov: MarkovSet, L: int, m: int, tau: int) -> SensitivityStack:
    if not markov.has_sensitivities:
        raise ValueError("Markov set carries no sensitivity blocks")
    m_y = [markov.my(i) for i in range(L)]
    m_u = [markov.mu(i) for i in range(L + m)]
    m_f = [markov.mf(i) for i in range(L)]
    m_t_y = block_toeplitz(m_y, L)
    m_t_u = block_toeplitz(m_u[:L], L)
    m_hankel = block_hankel(m_u, L, m)
    m_t_f = toeplitz_first_columns(m_f, L, tau)
    m_upsilon = np.hstack([m_hankel, m_t_f])
    m_z = np.hstack([m_t_y, m_t_u])
    return SensitivityStack(
        m_hankel=m_hankel,
        m_t_u=m_t_u,
        m_t_y=m_t_y,
        m_t_f_tau=m_t_f,
        m_upsilon=m_upsilon,
        m_z=m_z,
        L=L,
        n_columns=markov.n_columns,
    )


def gram_blocks(stack: SensitivityStack):
    """Trace-gram matrices P[i, j] = tr(M_i M_j^T) over the L row blocks of
    the Upsilon and z sensitivity stacks.
    """
    p_upsilon = _row_block_gram(stack.row_blocks(stack.m_upsilon))
    p_z = _row_block_gram(stack.row_blocks(stack.m_z))
    return p_upsilon, p_z


def _row_block_gram(blocks: np.ndarray) -> np.ndarray:
    g = np.einsum("iab,jab->ij", blocks, blocks)
    return la.symmetrize(g)


@dataclass
class RobustProblem:
    """Assembled data of the offline mixed-norm problem."""

    upsilon_hat: np.ndarray
    sigma_e: np.ndarray
    p_upsilon: np.ndarray
    p_z: np.ndarray
    pi_f: np.ndarray
    pi_z: np.ndarray
    L: int
    m: int
    tau: int
    n_f: int
    gamma_f2: float | None = None
    gamma_z2: float | None = None

    @property
    def sigma_e_l(self) -> np.ndarray:
        return np.kron(np.eye(self.L), self.sigma_e)

    @property
    def sigma_half(self) -> np.ndarray:
        return np.kron(np.eye(self.L), np.linalg.cholesky(self.sigma_e))

    @property
    def n_res(self) -> int:
        return self.upsilon_hat.shape[0]

    @property
    def aug_dim(self) -> int:
        return self.upsilon_hat.shape[1]

    def fault_constraint(self) -> QuadConstraint:
        """[G S] [[Pi_f, -Ups],[-Ups^T, I]] [G S]^T <= gamma_f^2 I with S the
        newest-fault selector."""
        middle = np.block(
            [
                [self.pi_f, -self.upsilon_hat],
                [-self.upsilon_hat.T, np.eye(self.aug_dim)],
            ]
        )
        sel = selector(self.n_f, self.aug_dim)
        return QuadConstraint(middle=middle, right_block=sel, gain_cols=self.n_res)

    def z_constraint(self) -> QuadConstraint:
        return QuadConstraint(middle=self.pi_z, right_block=None, gain_cols=self.n_res)

    def fault_bias(self, gmat: np.ndarray) -> float:
        return self.fault_constraint().lam_max(gmat)

    def z_bias(self, gmat: np.ndarray) -> float:
        return self.z_constraint().lam_max(gmat)

    def variance(self, gmat: np.ndarray) -> float:
        return trace_objective_value(gmat, self.sigma_half)


def build_problem(
    upsilon_hat: np.ndarray,
    sigma_e: np.ndarray,
    p_upsilon: np.ndarray,
    p_z: np.ndarray,
    L: int,
    m: int,
    tau: int,
    n_f: int,
) -> RobustProblem:
    if upsilon_hat.shape[0] != p_upsilon.shape[0] * sigma_e.shape[0]:
        raise ShapeMismatch("Upsilon rows inconsistent with L * n_y")
    pi_f = la.symmetrize(upsilon_hat @ upsilon_hat.T + np.kron(p_upsilon, sigma_e))
    eps = PI_F_REG_RTOL * max(np.trace(pi_f), 1e-300)
    if np.linalg.eigvalsh(pi_f).min() < eps:
        pi_f = pi_f + eps * np.eye(pi_f.shape[0])
    pi_z = la.symmetrize(np.kron(p_z, sigma_e))
    return RobustProblem(
        upsilon_hat=upsilon_hat,
        sigma_e=sigma_e,
        p_upsilon=p_upsilon,
        p_z=p_z,
        pi_f=pi_f,
        pi_z=pi_z,
        L=L,
        m=m,
        tau=tau,
        n_f=n_f,
    )


def problem_from_markov(markov: MarkovSet, L: int, m: int, tau: int) -> RobustProblem:
    """Assemble the robust problem straight from an identified Markov set."""
    _, _, upsilon = stacked_operators(markov, L, m, tau)
    stack = build_sensitivity(markov, L, m, tau)
    p_upsilon, p_z = gram_blocks(stack)
    return build_problem(
        upsilon, markov.sigma_e, p_upsilon, p_z, L, m, tau, markov.n_f
    )


def gamma_f_min(prob: RobustProblem):
    """Lower end of the admissible fault-bias bound and the ellipsoid
    center: gamma_f_min^2 = 1 - lambda_min(G0 Pi_f G0^T)."""
    sel = selector(prob.n_f, prob.aug_dim)
    g0 = sel @ prob.upsilon_hat.T @ np.linalg.inv(prob.pi_f)
    lam_min = float(np.linalg.eigvalsh(la.symmetrize(g0 @ prob.pi_f @ g0.T)).min())
    if lam_min <= la.RANK_RTOL:
        raise InfeasibleFaultConstraint(
            f"lambda_min(G0 Pi_f G0^T) = {lam_min:.3e}; no nontrivial design exists"
        )
    return float(np.clip(1.0 - lam_min, 0.0, 1.0 - 1e-15)), g0


def gamma_z_min(prob: RobustProblem, gamma_f2: float):
    """Smallest z-bias bound keeping the two constraint ellipsoids
    intersecting, and the single touching point."""
    _check_gamma_f(prob, gamma_f2)
    prog = ConicProgram(
        n_f=prob.n_f,
        n_cols=prob.n_res,
        objective_half=None,
        quad_constraints=[prob.fault_constraint(), prob.z_constraint()],
        gammas=[gamma_f2, "var"],
        minimize_gamma_index=1,
    )
    gmat, gamma_val, report = solve(prog)
    return float(gamma_val), gmat, report


def solve_G1(prob: RobustProblem, gamma_f2: float):
    """Variance-optimal point on the fault-bias ellipsoid alone, and the
    z-bias level it induces (the saturation level of the z bound)."""
    _check_gamma_f(prob, gamma_f2)
    prog = ConicProgram(
        n_f=prob.n_f,
        n_cols=prob.n_res,
        objective_half=prob.sigma_half,
        quad_constraints=[prob.fault_constraint()],
        gammas=[gamma_f2],
    )
    gmat, _, report = solve(prog)
    gamma_z1_2 = prob.z_bias(gmat)
    return gmat, float(gamma_z1_2), report


def solve_offline(prob: RobustProblem, gamma_f2: float, gamma_z2: float):
    """The offline robust gain: minimum variance subject to both bias
    ellipsoids at the given levels.

    When the z bound sits at (or above) the level the fault-only optimum
    already attains, the interior-point iteration degenerates; in that case
    the fault-only solution is the exact optimum of the two-constraint
    problem and is returned instead.
    """
    _check_gamma_f(prob, gamma_f2)
    prog = ConicProgram(
        n_f=prob.n_f,
        n_cols=prob.n_res,
        objective_half=prob.sigma_half,
        quad_constraints=[prob.fault_constraint(), prob.z_constraint()],
        gammas=[gamma_f2, gamma_z2],
    )
    try:
        gmat, _, report = solve(prog)
    except SolverFailure:
        gmat, gz1, report = solve_G1(prob, gamma_f2)
        if gz1 > gamma_z2 + FEASIBILITY_SLACK:
            raise
        report = dict(report, z_bound_inactive=True)
    prob.gamma_f2, prob.gamma_z2 = gamma_f2, gamma_z2
    return gmat, report


def offline_gain(
    prob: RobustProblem,
    t_y: np.ndarray,
    t_u: np.ndarray,
    gamma_f2: float,
    gamma_z2: float,
) -> EstimatorGain:
    gmat, report = solve_offline(prob, gamma_f2, gamma_z2)
    return EstimatorGain(
        Gmat=gmat,
        T_y=t_y,
        T_u=t_u,
        L=prob.L,
        m=prob.m,
        tau=prob.tau,
        kind="offline_robust",
        meta={
            "gamma_f2": gamma_f2,
            "gamma_z2": gamma_z2,
            "solver": report,
        },
    )


def z_bound_tuning(prob: RobustProblem, gamma_f2: float):
    """gamma_z^2 halfway between its feasible floor and its saturation
    level at the given fault-bias bound.

    When the admissible gamma_z interval collapses (the feasible gain set
    is nearly a point), the midpoint sits on a numerical knife edge; the
    bound is pinned to the saturation level instead, where the z constraint
    is inactive by construction.
    """
    gz_min, _, _ = gamma_z_min(prob, gamma_f2)
    _, gz1, _ = solve_G1(prob, gamma_f2)
    if gz1 - gz_min < 1e-2 * max(gz1, 1e-12):
        gamma_z2 = gz1
    else:
        gamma_z2 = 0.5 * (gz_min + gz1)
    return gamma_z2, gz_min, gz1


def default_tuning(prob: RobustProblem, nominal_gmat: np.ndarray):
    """Benchmark tuning: gamma_f^2 at the nominal design's fault-bias level,
    gamma_z^2 from the z-bound rule at that level.
    """
    gamma_f2 = prob.fault_bias(nominal_gmat)
    gf_min, _ = gamma_f_min(prob)
    gamma_f2 = float(np.clip(gamma_f2, gf_min, 1.0 - 1e-9))
    gamma_z2, gz_min, gz1 = z_bound_tuning(prob, gamma_f2)
    return gamma_f2, gamma_z2, gz_min, gz1


def _check_gamma_f(prob: RobustProblem, gamma_f2: float):
    if not 0.0 <= gamma_f2 < 1.0:
        raise ValueError(f"gamma_f^2 = {gamma_f2} outside [0, 1)")


@dataclass
class TradeoffRow:
    gamma_f2: float
    gamma_z2: float
    bias_f: float
    bias_z: float
    variance: float
    status: str


def tradeoff_sweep(prob: RobustProblem, gamma_f2_grid, gamma_z2_grid) -> list:
    """Solve the offline problem over a grid and record the three
    performance metrics per point; solver failures are recorded, not raised.
    """
    rows = []
    for gf in gamma_f2_grid:
        for gz in gamma_z2_grid:
            try:
                gmat, report = solve_offline(prob, float(gf), float(gz))
                rows.append(
                    TradeoffRow(
                        gamma_f2=float(gf),
                        gamma_z2=float(gz),
                        bias_f=prob.fault_bias(gmat),
                        bias_z=prob.z_bias(gmat),
                        variance=prob.variance(gmat),
                        status=report["status"],
                    )
                )
            except SolverFailure as exc:
                rows.append(
                    TradeoffRow(
                        gamma_f2=float(gf),
                        gamma_z2=float(gz),
                        bias_f=float("nan"),
                        bias_z=float("nan"),
                        variance=float("nan"),
                        status=str(exc.status),
                    )
                )
    return rows


def tradeoff_csv(rows, path):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma_f2", "gamma_z2", "bias_f", "bias_z", "variance", "status"])
        for r in rows:
            w.writerow(
                [
                    format(r.gamma_f2, ".17g"),
                    format(r.gamma_z2, ".17g"),
                    format(r.bias_f, ".17g"),
                    format(r.bias_z, ".17g"),
                    format(r.variance, ".17g"),
                    r.status,
                ]
            )
