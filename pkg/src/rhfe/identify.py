"""Closed-loop least-squares identification of predictor Markov parameters.

The regression stacks past I/O windows of length p into the data matrix
Z_id; the LS fit of Y_id on Z_id recovers the parameter sequence
Xi = [H_p^u H_p^y ... H_1^u H_1^y H_0^u], and the column blocks of the
right inverse Z_id^- are the sensitivity blocks M_i that propagate the
identification innovations into parameter errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _linalg as la
from .errors import BlockMisalignment, RankDeficientRegressor, ShapeMismatch
from .models import FaultConfig, MarkovSet
from .simulate import TrajectoryDataset

CONDITION_LIMIT = 1e12
COV_FLOOR_RTOL = 1e-10


@dataclass
class RegressionData:
    Y_id: np.ndarray  # n_y x Nbar
    Z_id: np.ndarray  # (p*(n_u+n_y) [+ n_u]) x Nbar
    p: int
    n_u: int
    n_y: int
    feedthrough: bool = False
    E_id_hat: np.ndarray | None = None

    @property
    def n_columns(self) -> int:
        return self.Y_id.shape[1]


def build_regression(
    traj: TrajectoryDataset, p: int, feedthrough: bool = False
) -> RegressionData:
    """Data matrices from a fault-free trajectory.

    Column t (t = p..T-1) of Z_id stacks
    [u(t-p); y(t-p); ...; u(t-1); y(t-1)] and the matching column of
    Y_id is y(t).  The first p samples are consumed as regressor history.

    With ``feedthrough`` the current input u(t) is appended as the last
    regressor block so the direct term H_0^u = D is identified too.  This is
    only sound when the controller acts with at least one step of delay:
    under instantaneous output feedback u(t) is correlated with the current
    innovation and the fit acquires a bias floor that no amount of data
    removes, so for feedthrough-free plants the block is excluded and
    H_0^u = 0 is imposed exactly.
    """
    if not traj.fault_free:
        raise ValueError("identification requires fault-free data (f_true == 0)")
    T = traj.T
    if T < p + 10:
        raise ValueError(f"need T >= p + 10 samples, got T={T}, p={p}")
    n_u, n_y = traj.u.shape[1], traj.y.shape[1]
    nbar = T - p
    rows = p * (n_u + n_y) + (n_u if feedthrough else 0)
    z = np.zeros((rows, nbar))
    for i in range(p):
        # lag p - i: u(t-p+i), y(t-p+i)
        base = i * (n_u + n_y)
        z[base : base + n_u] = traj.u[i : i + nbar].T
        z[base + n_u : base + n_u + n_y] = traj.y[i : i + nbar].T
    if feedthrough:
        z[rows - n_u :] = traj.u[p : p + nbar].T
    y = traj.y[p : p + nbar].T

    gram = z @ z.T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise RankDeficientRegressor(
            f"condition number of Z_id Z_id^T is {cond:.3e} (insufficient excitation)"
        )
    return RegressionData(
        Y_id=y, Z_id=z, p=p, n_u=n_u, n_y=n_y, feedthrough=feedthrough
    )


def ls_identify(reg: RegressionData):
    """LS estimate Xi_hat = Y Z^T (Z Z^T)^-1 and the right inverse
    Z^- = Z^T (Z Z^T)^-1, solved through QR of Z^T for conditioning.
    The fit residual is stored on ``reg``.
    """
    zt = reg.Z_id.T  # Nbar x rows
    q, r = np.linalg.qr(zt)
    diag = np.abs(np.diag(r))
    if diag.min() <= diag.max() * 1e-13:
        raise RankDeficientRegressor("Z_id numerically rank deficient")
    # Xi_hat^T solves R Xi^T = Q^T Y^T
    xi_hat = np.linalg.solve(r, q.T @ reg.Y_id.T).T
    # Z^- = Z^T (Z Z^T)^-1 = Q R^-T
    z_pinv = np.linalg.solve(r, q.T).T
    reg.E_id_hat = reg.Y_id - xi_hat @ reg.Z_id
    return xi_hat, z_pinv


def innovation_cov(reg: RegressionData, xi_hat: np.ndarray) -> np.ndarray:
    """Sample covariance of the fit residual, eigenvalue-floored to keep it
    positive definite.
    """
    e = reg.Y_id - xi_hat @ reg.Z_id
    sigma = la.symmetrize(e @ e.T / reg.n_columns)
    floor = COV_FLOOR_RTOL * max(np.trace(sigma), 1e-300)
    w, v = np.linalg.eigh(sigma)
    if w.min() < floor:
        w = np.clip(w, floor, None)
        sigma = la.symmetrize(v @ np.diag(w) @ v.T)
    return sigma


def _split_blocks(mat: np.ndarray, p: int, n_u: int, n_y: int, feedthrough: bool):
    """Column blocks (H_i^u/H_i^y or M_i^u/M_i^y) from the Xi / Z^- layout."""
    size = p * (n_u + n_y) + (n_u if feedthrough else 0)
    if mat.shape[1] != size:
        raise BlockMisalignment(f"expected {size} columns, got {mat.shape[1]}")
    h_u = [None] * (p + 1)
    h_y = [None] * (p + 1)
    for i in range(p):
        base = i * (n_u + n_y)
        # column block at offset i carries lag p - i
        h_u[p - i] = mat[:, base : base + n_u]
        h_y[p - i] = mat[:, base + n_u : base + n_u + n_y]
    if feedthrough:
        h_u[0] = mat[:, size - n_u :]
    else:
        h_u[0] = np.zeros((mat.shape[0], n_u))
    h_y[0] = np.zeros((mat.shape[0], n_y))
    return h_u, h_y


def extract_markov(
    xi_hat: np.ndarray,
    z_pinv: np.ndarray,
    cfg: FaultConfig,
    reg: RegressionData,
    sigma_e: np.ndarray | None = None,
) -> MarkovSet:
    """Slice the identified Markov parameters and sensitivity blocks out of
    Xi_hat and Z^- and assemble the fault channel columns.

    Sensor channel j: H_i^f = -(H_i^y)^[j] for i > 0 with H_0^f = I^[j]
    exact (so M_0^f = 0 there); actuator channel l: H_i^f = (H_i^u)^[l] for
    all i >= 0.
    """
    p, n_u, n_y = reg.p, reg.n_u, reg.n_y
    cfg.validate(n_y, n_u)
    h_u, h_y = _split_blocks(xi_hat, p, n_u, n_y, reg.feedthrough)
    m_u, m_y = _split_blocks(z_pinv, p, n_u, n_y, reg.feedthrough)

    h_f, m_f = [], []
    eye = np.eye(n_y)
    for i in range(p + 1):
        h_cols, m_cols = [], []
        for j in cfg.sensors:
            if i == 0:
                h_cols.append(eye[:, j - 1])
                m_cols.append(np.zeros(reg.n_columns))
            else:
                h_cols.append(-h_y[i][:, j - 1])
                m_cols.append(-m_y[i][:, j - 1])
        for l in cfg.actuators:
            h_cols.append(h_u[i][:, l - 1])
            m_cols.append(m_u[i][:, l - 1])
        h_f.append(np.column_stack(h_cols))
        m_f.append(np.column_stack(m_cols))

    if sigma_e is None:
        if reg.E_id_hat is None:
            reg.E_id_hat = reg.Y_id - xi_hat @ reg.Z_id
        sigma_e = innovation_cov(reg, xi_hat)
    return MarkovSet(
        H_u=h_u,
        H_y=h_y,
        H_f=h_f,
        sigma_e=sigma_e,
        M_u=m_u,
        M_y=m_y,
        M_f=m_f,
        p=p,
        n_columns=reg.n_columns,
    )


def assemble_xi(
    markov_hu: list, markov_hy: list, p: int, feedthrough: bool = False
) -> np.ndarray:
    """Inverse of the Xi block slicing (used for round-trips and oracles)."""
    blocks = []
    for i in range(p, 0, -1):
        blocks.append(markov_hu[i])
        blocks.append(markov_hy[i])
    if feedthrough:
        blocks.append(markov_hu[0])
    return np.hstack(blocks)


def identify(
    traj: TrajectoryDataset, p: int, cfg: FaultConfig, feedthrough: bool = False
) -> MarkovSet:
    """Full identification pipeline: regression, LS fit, covariance, blocks."""
    reg = build_regression(traj, p, feedthrough=feedthrough)
    xi_hat, z_pinv = ls_identify(reg)
    sigma_e = innovation_cov(reg, xi_hat)
    return extract_markov(xi_hat, z_pinv, cfg, reg, sigma_e=sigma_e)
