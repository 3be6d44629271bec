"""Receding-horizon fault estimators: residual generation, the nominal
weighted-LS gain (true or identified Markov parameters), and the full-model
cross-check estimator built from the original state-space matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _linalg as la
from .errors import ShapeMismatch, SingularCovariance, WindowNotFull
from .models import FaultConfig, MarkovSet, StateSpaceModel
from .simulate import TrajectoryDataset
from .structured import block_hankel, block_toeplitz, toeplitz_first_columns


@dataclass(frozen=True)
class StackedWindow:
    """I/O samples over [k-L+1, k], stacked oldest-first."""

    y_win: np.ndarray
    u_win: np.ndarray
    k: int
    L: int

    @classmethod
    def from_trajectory(cls, traj: TrajectoryDataset, k: int, L: int) -> "StackedWindow":
        if k < L - 1:
            raise WindowNotFull(f"window at k={k} needs k >= L-1 = {L - 1}")
        if k >= traj.T:
            raise IndexError(f"k={k} beyond trajectory length {traj.T}")
        k0 = k - L + 1
        return cls(
            y_win=traj.y[k0 : k + 1].reshape(-1),
            u_win=traj.u[k0 : k + 1].reshape(-1),
            k=k,
            L=L,
        )

    @property
    def z_win(self) -> np.ndarray:
        return np.concatenate([self.y_win, self.u_win])


@dataclass
class EstimatorGain:
    """A fault-estimator matrix mapping the stacked residual to f_hat(k-tau),
    together with the Toeplitz pair used to generate that residual.
    """

    Gmat: np.ndarray  # n_f x (n_y * L)
    T_y: np.ndarray
    T_u: np.ndarray
    L: int
    m: int
    tau: int
    kind: str  # alg0 | nominal | offline_robust | online_robust | original_model
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.Gmat)):
            raise ValueError("gain has non-finite entries")

    @property
    def n_f(self) -> int:
        return self.Gmat.shape[0]


def residual(t_y: np.ndarray, t_u: np.ndarray, win: StackedWindow) -> np.ndarray:
    """Stacked residual r = (I - T_y) y_win - T_u u_win."""
    if t_y.shape[0] != win.y_win.shape[0]:
        raise ShapeMismatch("Toeplitz size does not match window")
    return win.y_win - t_y @ win.y_win - t_u @ win.u_win


def selector(n_f: int, width: int) -> np.ndarray:
    """[0 ... 0 I_nf]: picks the newest fault block of the augmented unknown."""
    s = np.zeros((n_f, width))
    s[:, width - n_f :] = np.eye(n_f)
    return s


def build_upsilon(hankel: np.ndarray, t_f_tau: np.ndarray) -> np.ndarray:
    if hankel.shape[0] != t_f_tau.shape[0]:
        raise ShapeMismatch(
            f"row mismatch: Hankel {hankel.shape} vs fault Toeplitz {t_f_tau.shape}"
        )
    return np.hstack([hankel, t_f_tau])


def stacked_operators(markov: MarkovSet, L: int, m: int, tau: int):
    """T_y, T_u, Upsilon = [H_{L,m}, T_f(first L-tau block cols)]."""
    t_y = block_toeplitz(markov.H_y, L)
    t_u = block_toeplitz(markov.H_u, L)
    hank = block_hankel(markov.H_u, L, m)
    t_f = toeplitz_first_columns(markov.H_f, L, tau)
    return t_y, t_u, build_upsilon(hank, t_f)


def weighted_ls_gain(upsilon: np.ndarray, sigma_e: np.ndarray, L: int, n_f: int):
    """G = S (Ups^T Sig^-1 Ups)^+ Ups^T Sig^-1 with Sig = I_L (x) Sigma_e
    and S the newest-fault selector.  The pseudo-inverse is Moore-Penrose
    at the shared rank tolerance, which makes the (generally non-unique)
    solution deterministic and minimum-norm.
    """
    sig_inv = np.kron(np.eye(L), np.linalg.inv(sigma_e))
    wt = upsilon.T @ sig_inv
    normal = la.symmetrize(wt @ upsilon)
    sel = selector(n_f, upsilon.shape[1])
    return sel @ la.pinv(normal) @ wt


def nominal_gain(
    markov: MarkovSet, L: int, m: int, tau: int, kind: str = "nominal"
) -> EstimatorGain:
    """Receding-horizon gain from a Markov set (Alg0 with true parameters,
    Alg1 with identified ones).
    """
    t_y, t_u, upsilon = stacked_operators(markov, L, m, tau)
    g = weighted_ls_gain(upsilon, markov.sigma_e, L, markov.n_f)
    return EstimatorGain(Gmat=g, T_y=t_y, T_u=t_u, L=L, m=m, tau=tau, kind=kind)


def estimate(gain: EstimatorGain, win: StackedWindow) -> np.ndarray:
    """f_hat(k - tau) from a full window ending at k."""
    if win.L != gain.L:
        raise ShapeMismatch("window horizon does not match gain")
    return gain.Gmat @ residual(gain.T_y, gain.T_u, win)


def estimate_trajectory(gain: EstimatorGain, traj: TrajectoryDataset) -> np.ndarray:
    """Estimates f_hat(k - tau) for every full window; rows before the first
    full window are NaN (the startup sentinel).
    """
    out = np.full((traj.T, gain.n_f), np.nan)
    for k in range(gain.L - 1, traj.T):
        win = StackedWindow.from_trajectory(traj, k, gain.L)
        out[k - gain.tau] = estimate(gain, win)
    return out


def _plant_markov(c, a, x0_mat, feedthrough, count):
    blocks = [feedthrough]
    c_a = c.copy()
    for _ in range(count):
        blocks.append(c_a @ x0_mat)
        c_a = c_a @ a
    return blocks


def original_model_gain(
    model: StateSpaceModel, cfg: FaultConfig, L: int, tau: int
) -> EstimatorGain:
    """Cross-check estimator built directly from the original model: the
    stacked output equation over the window gives
    y = O_L x + T_u u + T_f f + T_w w + v, the noise covariance
    Sig = T_w (I (x) Q) T_w^T + I (x) R, and the weighted-LS gain over
    [O_L, T_f(first L - tau block cols)].

    It maps the pseudo-residual y - T_u u, so it is packaged with T_y = 0.
    """
    cfg.validate(model.n_y, model.n_u)
    from .simulate import _plant_fault_matrices

    e_mat, g_mat = _plant_fault_matrices(model, cfg)
    a, c = model.A, model.C
    obs = la.observability_matrix(a, c, L)
    h_u = _plant_markov(c, a, model.B, model.D, L)
    h_f = _plant_markov(c, a, e_mat, g_mat, L)
    h_w = _plant_markov(c, a, model.F, np.zeros((model.n_y, model.n_w)), L)
    t_u = block_toeplitz(h_u, L)
    t_f = toeplitz_first_columns(h_f, L, tau)
    t_w = block_toeplitz(h_w, L)
    sig = t_w @ np.kron(np.eye(L), model.Q) @ t_w.T + np.kron(np.eye(L), model.R)
    w_eig = np.linalg.eigvalsh(la.symmetrize(sig))
    if w_eig.min() <= 0:
        raise SingularCovariance("window noise covariance is not positive definite")
    sig_inv = np.linalg.inv(la.symmetrize(sig))

    psi = np.hstack([obs, t_f])
    wt = psi.T @ sig_inv
    normal = la.symmetrize(wt @ psi)
    n_f = cfg.n_f
    sel = selector(n_f, psi.shape[1])
    g = sel @ la.pinv(normal) @ wt
    return EstimatorGain(
        Gmat=g,
        T_y=np.zeros((model.n_y * L, model.n_y * L)),
        T_u=t_u,
        L=L,
        m=0,
        tau=tau,
        kind="original_model",
    )
