"""Closed-loop simulation under static output feedback, with injectable
fault profiles, plus the discretized VTOL benchmark fixture.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DivergedState, ShapeMismatch
from .models import FaultConfig, StateSpaceModel

DIVERGENCE_BOUND = 1e12


@dataclass(frozen=True)
class ControllerConfig:
    """Static output feedback u(k) = -Ky y(k) + eta(k).

    The reference eta is white Gaussian noise with covariance ``ref_cov``
    when set, otherwise the constant vector ``ref_level`` (zero if neither).
    """

    Ky: np.ndarray
    ref_cov: np.ndarray | None = None
    ref_level: np.ndarray | None = None

    def reference(self, n_u: int, T: int, rng: np.random.Generator) -> np.ndarray:
        if self.ref_cov is not None:
            half = np.linalg.cholesky(
                np.asarray(self.ref_cov) + 1e-15 * np.eye(n_u)
            )
            return rng.standard_normal((T, n_u)) @ half.T
        if self.ref_level is not None:
            return np.tile(np.asarray(self.ref_level, dtype=float), (T, 1))
        return np.zeros((T, n_u))

    def with_reference(self, *, cov=None, level=None) -> "ControllerConfig":
        return ControllerConfig(Ky=self.Ky, ref_cov=cov, ref_level=level)


@dataclass(frozen=True)
class FaultProfile:
    """Fault waveforms: zero up to (and including) ``onset``, then per-channel
    descriptors ``("zero",)``, ``("const", level)``, or ``("sin", omega, amp)``
    evaluated at the absolute sample index.
    """

    onset: int
    channels: tuple

    def __post_init__(self):
        if self.onset < 0:
            raise ValueError("onset must be >= 0")
        for ch in self.channels:
            if ch[0] not in ("zero", "const", "sin"):
                raise ValueError(f"unknown waveform kind {ch[0]!r}")
            if not all(np.isfinite(ch[1:])):
                raise ValueError("waveform parameters must be finite")

    @property
    def n_f(self) -> int:
        return len(self.channels)

    def value(self, k: int) -> np.ndarray:
        if k <= self.onset:
            return np.zeros(self.n_f)
        out = np.zeros(self.n_f)
        for i, ch in enumerate(self.channels):
            if ch[0] == "const":
                out[i] = ch[1]
            elif ch[0] == "sin":
                out[i] = ch[2] * np.sin(ch[1] * k)
        return out

    def series(self, T: int) -> np.ndarray:
        return np.vstack([self.value(k) for k in range(T)])

    @classmethod
    def none(cls, n_f: int) -> "FaultProfile":
        return cls(onset=0, channels=tuple(("zero",) for _ in range(n_f)))


@dataclass(frozen=True)
class TrajectoryDataset:
    u: np.ndarray
    y: np.ndarray
    f_true: np.ndarray
    reference: np.ndarray
    seed: int

    def __post_init__(self):
        T = self.u.shape[0]
        if not (self.y.shape[0] == self.f_true.shape[0] == self.reference.shape[0] == T):
            raise ShapeMismatch("trajectory arrays must share the sample count")
        for name in ("u", "y", "f_true", "reference"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in {name}")

    @property
    def T(self) -> int:
        return self.u.shape[0]

    @property
    def fault_free(self) -> bool:
        return bool(np.all(self.f_true == 0))

    def to_csv(self, path):
        n_u, n_y, n_f = self.u.shape[1], self.y.shape[1], self.f_true.shape[1]
        header = (
            ["k"]
            + [f"u{i+1}" for i in range(n_u)]
            + [f"y{i+1}" for i in range(n_y)]
            + [f"f{i+1}" for i in range(n_f)]
            + [f"eta{i+1}" for i in range(n_u)]
        )
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(self.T):
                row = [k] + [
                    format(v, ".17g")
                    for v in np.concatenate(
                        [self.u[k], self.y[k], self.f_true[k], self.reference[k]]
                    )
                ]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path, n_u: int, n_y: int, n_f: int, seed: int = -1):
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        data = np.atleast_2d(data)
        c = 1
        u = data[:, c : c + n_u]
        y = data[:, c + n_u : c + n_u + n_y]
        f = data[:, c + n_u + n_y : c + n_u + n_y + n_f]
        eta = data[:, c + n_u + n_y + n_f :]
        return cls(u=u, y=y, f_true=f, reference=eta, seed=seed)


def replicate_seed(seed: int, replicate: int) -> int:
    """Seed-splitting rule for Monte Carlo replicates."""
    return int(seed) + int(replicate)


def simulate_closed_loop(
    model: StateSpaceModel,
    ctrl: ControllerConfig,
    fault: FaultProfile,
    cfg: FaultConfig,
    T: int,
    seed: int,
    x0: np.ndarray | None = None,
) -> TrajectoryDataset:
    """Simulate y(k) = C x + D u + G f + v under u(k) = -Ky y(k) + eta(k).

    The feedback acts on the current output; with direct feedthrough the
    algebraic loop (I + Ky D) u = -Ky (C x + G f + v) + eta is solved exactly.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    cfg.validate(model.n_y, model.n_u)
    e_mat, g_mat = _plant_fault_matrices(model, cfg)

    rng = np.random.default_rng(seed)
    eta = ctrl.reference(model.n_u, T, rng)
    q_half = _psd_half(model.Q)
    r_half = np.linalg.cholesky(model.R)
    w = rng.standard_normal((T, model.n_w)) @ q_half.T
    v = rng.standard_normal((T, model.n_y)) @ r_half.T

    ky = np.asarray(ctrl.Ky, dtype=float)
    loop = np.eye(model.n_u) + ky @ model.D

    x = np.zeros(model.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    u_out = np.zeros((T, model.n_u))
    y_out = np.zeros((T, model.n_y))
    f_out = np.zeros((T, cfg.n_f))
    for k in range(T):
        f_k = fault.value(k)
        rhs = -ky @ (model.C @ x + g_mat @ f_k + v[k]) + eta[k]
        u_k = np.linalg.solve(loop, rhs)
        y_k = model.C @ x + model.D @ u_k + g_mat @ f_k + v[k]
        u_out[k], y_out[k], f_out[k] = u_k, y_k, f_k
        x = model.A @ x + model.B @ u_k + e_mat @ f_k + model.F @ w[k]
        if np.max(np.abs(x)) > DIVERGENCE_BOUND:
            raise DivergedState(f"state diverged at k={k}")
    return TrajectoryDataset(u=u_out, y=y_out, f_true=f_out, reference=eta, seed=seed)


def _psd_half(m):
    w, vec = np.linalg.eigh(0.5 * (m + m.T))
    return vec * np.sqrt(np.clip(w, 0, None))


def _plant_fault_matrices(model: StateSpaceModel, cfg: FaultConfig):
    """E, G columns of the plant for the configured channels."""
    e_cols, g_cols = [], []
    n_y = model.n_y
    for j in cfg.sensors:
        e_cols.append(np.zeros(model.n))
        g_cols.append(np.eye(n_y)[:, j - 1])
    for l in cfg.actuators:
        e_cols.append(model.B[:, l - 1])
        g_cols.append(model.D[:, l - 1])
    return np.column_stack(e_cols), np.column_stack(g_cols)


def vtol_model() -> tuple[StateSpaceModel, ControllerConfig]:
    """Zero-order-hold discretization (0.5 s) of the VTOL benchmark with its
    empirical stabilizing output-feedback gain.
    """
    a_c = np.array(
        [
            [-0.0366, 0.0271, 0.0188, -0.4555],
            [0.0482, -1.01, 0.0024, -4.0208],
            [0.1002, 0.3681, -0.707, 1.42],
            [0.0, 0.0, 1.0, 0.0],
        ]
    )
    b_c = np.array(
        [
            [0.4422, 0.1761],
            [3.5446, -7.5922],
            [-5.52, 4.49],
            [0.0, 0.0],
        ]
    )
    c_c = np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 1.0, 1.0],
        ]
    )
    h = 0.5
    # ZOH: [A_d, B_d; 0, I] = expm([A_c, B_c; 0, 0] * h)
    n, n_u = 4, 2
    aug = np.zeros((n + n_u, n + n_u))
    aug[:n, :n] = a_c
    aug[:n, n:] = b_c
    m = scipy.linalg.expm(aug * h)
    a_d, b_d = m[:n, :n], m[:n, n:]

    # Default fault structure: both actuators (E = B, G = D); callers
    # reconfigure via FaultConfig when building estimators.
    model = StateSpaceModel(
        A=a_d,
        B=b_d,
        C=c_c,
        D=np.zeros((4, 2)),
        E=b_d.copy(),
        F=np.eye(4),
        G=np.zeros((4, 2)),
        Q=0.16 * np.eye(4),
        R=0.64 * np.eye(4),
    )
    ky = np.array([[0.0, 0.0, -0.5, 0.0], [0.0, 0.0, -0.1, -0.1]])
    closed = a_d - b_d @ ky @ c_c
    if max(abs(np.linalg.eigvals(closed))) >= 1.0:
        warnings.warn("closed-loop VTOL matrix is not stable", stacklevel=2)
    return model, ControllerConfig(Ky=ky)


def fault_profile_benchmark() -> FaultProfile:
    """The benchmark fault: zero through k=50, then [sin(0.1*pi*k), 1]."""
    return FaultProfile(
        onset=50, channels=(("sin", 0.1 * np.pi, 1.0), ("const", 1.0))
    )
