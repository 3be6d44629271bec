"""Thin conic-programming layer over cvxpy.

All of the robust designs share one shape: minimize a trace quadratic in the
gain matrix subject to matrix-quadratic constraints
``[G S] M [G S]^T <= gamma^2 I``.  Each quadratic constraint is lifted
exactly through a Schur complement after factoring the PSD middle matrix,
and feasibility of every returned solution is re-verified with plain
numpy, independent of the solver's internal scaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from . import _linalg as la
from .errors import IndefiniteMiddleMatrix, SolverFailure

SOLVER_TOL = 1e-9
# Residuals of the original (un-lifted) constraints accepted after a solve.
FEASIBILITY_SLACK = 1e-6


def psd_factor(m: np.ndarray) -> np.ndarray:
    """W with W W^T = m; negative eigenvalues are round-off and clipped,
    significantly negative ones are an error.
    """
    m = la.symmetrize(m)
    w, v = np.linalg.eigh(m)
    if w.min() < -1e-8 * max(1.0, abs(w).max()):
        raise IndefiniteMiddleMatrix(
            f"middle matrix has eigenvalue {w.min():.3e}"
        )
    return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass
class QuadConstraint:
    """[G, S] M [G, S]^T <= gamma^2 I with S a constant right block (may be
    empty).  ``w`` factors M; the top rows of w multiply G, the bottom rows
    multiply S.
    """

    middle: np.ndarray
    right_block: np.ndarray | None  # S, n_f x (dim - n_yL); None when absent
    gain_cols: int

    def factor(self) -> np.ndarray:
        return psd_factor(self.middle)

    def value(self, gmat: np.ndarray) -> np.ndarray:
        stack = gmat if self.right_block is None else np.hstack([gmat, self.right_block])
        return stack @ self.middle @ stack.T

    def lam_max(self, gmat: np.ndarray) -> float:
        return float(np.linalg.eigvalsh(la.symmetrize(self.value(gmat))).max())


def lifted_psd(g_var, constraint: QuadConstraint, gamma2):
    """Exact Schur-complement lift of a quadratic constraint; ``gamma2`` may
    be a float or a cvxpy scalar variable.
    """
    w = constraint.factor()
    top = w[: constraint.gain_cols, :]
    affine = g_var @ top
    if constraint.right_block is not None:
        affine = affine + constraint.right_block @ w[constraint.gain_cols :, :]
    n_f = g_var.shape[0]
    r = w.shape[1]
    if isinstance(gamma2, (int, float)):
        corner = float(gamma2) * np.eye(n_f)
    else:
        corner = gamma2 * np.eye(n_f)
    block = cp.bmat([[corner, affine], [affine.T, np.eye(r)]])
    return block >> 0


@dataclass
class ConicProgram:
    """A trace-objective program over a gain matrix with lifted quadratic
    constraints, plus the data needed to re-verify the solution.
    """

    n_f: int
    n_cols: int
    objective_half: np.ndarray | None  # Sigma_half with tr(G Sig G^T) = ||G Sig_half||_F^2
    quad_constraints: list
    gammas: list  # float bound per quadratic constraint, or "var" for the epigraph one
    minimize_gamma_index: int | None = None

    def build(self):
        g = cp.Variable((self.n_f, self.n_cols))
        cons = []
        gamma_var = None
        for qc, gam in zip(self.quad_constraints, self.gammas):
            if gam == "var":
                gamma_var = cp.Variable(nonneg=True)
                cons.append(lifted_psd(g, qc, gamma_var))
            else:
                cons.append(lifted_psd(g, qc, float(gam)))
        if self.minimize_gamma_index is not None:
            obj = cp.Minimize(gamma_var)
        else:
            obj = cp.Minimize(cp.sum_squares(g @ self.objective_half))
        return g, gamma_var, cp.Problem(obj, cons)


def solve(prog: ConicProgram, solver: str = "CLARABEL"):
    """Solve and independently verify; returns (gain, optional gamma value,
    residual report).

    Near-degenerate instances (bounds at the very edge of feasibility) can
    defeat the tight tolerances, so the attempt ladder relaxes them before
    switching solvers.
    """
    if solver == "CLARABEL":
        attempts = [
            ("CLARABEL", dict(tol_gap_abs=SOLVER_TOL, tol_gap_rel=SOLVER_TOL,
                              tol_feas=SOLVER_TOL)),
            # Ruiz equilibration hurts on near-degenerate two-constraint
            # instances (both bounds active on a razor-thin feasible set);
            # disabling it is what usually rescues those.
            ("CLARABEL", dict(equilibrate_enable=False)),
            ("CLARABEL", {}),
            ("CLARABEL", dict(tol_gap_abs=1e-7, tol_gap_rel=1e-7, tol_feas=1e-7,
                              max_iter=500)),
        ]
    else:
        attempts = [(solver, {})]
    last_exc = None
    for name, kwargs in attempts:
        # fresh problem per attempt: cvxpy refuses to change some solver
        # settings (e.g. equilibration) on a re-solve of the same object
        g, gamma_var, problem = prog.build()
        try:
            problem.solve(solver=getattr(cp, name), **kwargs)
        except cp.error.SolverError as exc:
            last_exc = exc
            continue
        if problem.status in ("optimal", "optimal_inaccurate"):
            break
        last_exc = SolverFailure(
            f"solver returned status {problem.status}", status=problem.status
        )
    else:
        if isinstance(last_exc, SolverFailure):
            raise last_exc
        raise SolverFailure(f"solver error: {last_exc}", status="error") from last_exc
    gmat = np.asarray(g.value)
    gamma_val = None if gamma_var is None else float(gamma_var.value)
    residuals = []
    for qc, gam in zip(prog.quad_constraints, prog.gammas):
        bound = gamma_val if gam == "var" else float(gam)
        residuals.append(qc.lam_max(gmat) - bound)
    report = {
        "status": problem.status,
        "objective": float(problem.value),
        "residuals": residuals,
    }
    if max(residuals) > FEASIBILITY_SLACK:
        raise SolverFailure(
            f"returned point violates a constraint by {max(residuals):.3e}",
            status=problem.status,
            stats=report,
        )
    return gmat, gamma_val, report


def trace_objective_value(gmat: np.ndarray, sigma_half: np.ndarray) -> float:
    return float(np.linalg.norm(gmat @ sigma_half, "fro") ** 2)
